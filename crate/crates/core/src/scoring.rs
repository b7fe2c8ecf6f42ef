//! Scoring vectors, rank rescaling, top-k sets and overlaps, and the Renyi
//! robustness divergence between two attribution maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::order::RenyiOrder;

/// Smallest unnormalized sigmoid weight; keeps every weight strictly positive.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Tolerance on `sum = 1` accepted when validating probability maps.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// Nonincreasing, strictly positive rank weights summing to one:
/// `v_i = sigmoid(-eta (i - k_star)) / Z` for `i = 1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringVector {
    weights: Vec<f64>,
    pub k_star: f64,
    pub eta: f64,
    pub normalizer: f64,
}

impl ScoringVector {
    pub fn new(n: usize, k_star: f64, eta: f64) -> Result<Self> {
        build_scoring_vector(n, k_star, eta)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Largest weight, `v_1`.
    pub fn max_weight(&self) -> f64 {
        self.weights[0]
    }
}

pub fn build_scoring_vector(n: usize, k_star: f64, eta: f64) -> Result<ScoringVector> {
    if n == 0 {
        return Err(Error::param("scoring vector length must be >= 1"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::param(format!("eta must be positive, got {eta}")));
    }
    if !k_star.is_finite() {
        return Err(Error::param("k_star must be finite"));
    }
    let raw: Vec<f64> = (1..=n)
        .map(|i| {
            let z = eta * (i as f64 - k_star);
            let s = if z > 0.0 {
                let e = (-z).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + z.exp())
            };
            s.max(WEIGHT_FLOOR)
        })
        .collect();
    let normalizer: f64 = raw.iter().sum();
    let weights = raw.into_iter().map(|w| w / normalizer).collect();
    Ok(ScoringVector {
        weights,
        k_star,
        eta,
        normalizer,
    })
}

/// A raw, unconstrained attribution map (finite entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMap(Vec<f64>);

impl RawMap {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|x| !x.is_finite()) {
            return Err(Error::domain(format!("raw map entry {i} is not finite")));
        }
        Ok(RawMap(scores))
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Where a smoothed map came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sigma: f64,
    pub d_star: u32,
    pub seed: u64,
}

/// An averaged, rank-rescaled map: strictly positive entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedMap {
    scores: Vec<f64>,
    pub samples: usize,
    pub provenance: Option<Provenance>,
}

impl SmoothedMap {
    /// Validates positivity and normalization (within `SIMPLEX_TOL`) and
    /// renormalizes.
    pub fn from_scores(scores: Vec<f64>, samples: usize, provenance: Option<Provenance>) -> Result<Self> {
        let scores = normalized_positive(&scores, "smoothed map")?;
        Ok(SmoothedMap {
            scores,
            samples,
            provenance,
        })
    }

    pub(crate) fn from_parts_unchecked(scores: Vec<f64>, samples: usize, provenance: Option<Provenance>) -> Self {
        SmoothedMap {
            scores,
            samples,
            provenance,
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl AsRef<[f64]> for SmoothedMap {
    fn as_ref(&self) -> &[f64] {
        &self.scores
    }
}

/// Indices sorted by descending value, ties by ascending index.
pub fn descending_order(map: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..map.len()).collect();
    idx.sort_by(|&a, &b| map[b].total_cmp(&map[a]).then(a.cmp(&b)));
    idx
}

/// Replaces every entry by the scoring weight of its rank.
pub fn rank_rescale(raw: &RawMap, v: &ScoringVector) -> Result<Vec<f64>> {
    if raw.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: v.len(),
            found: raw.len(),
        });
    }
    let mut out = vec![0.0; raw.len()];
    rank_rescale_into(raw.scores(), v.weights(), &mut out);
    Ok(out)
}

fn rank_rescale_into(raw: &[f64], v: &[f64], out: &mut [f64]) {
    for (rank, i) in descending_order(raw).into_iter().enumerate() {
        out[i] = v[rank];
    }
}

/// Indices of the `k` largest entries (ties by ascending index), in rank order.
pub fn top_k_set(map: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > map.len() {
        return Err(Error::domain(format!("k = {k} out of range 1..={}", map.len())));
    }
    let mut order = descending_order(map);
    order.truncate(k);
    Ok(order)
}

/// `|T_k(a) intersect T_k(b)| / k`.
pub fn top_k_overlap(a: &[f64], b: &[f64], k: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let ta = top_k_set(a, k)?;
    let tb = top_k_set(b, k)?;
    let mut in_b = vec![false; a.len()];
    for i in tb {
        in_b[i] = true;
    }
    let common = ta.into_iter().filter(|&i| in_b[i]).count();
    Ok(common as f64 / k as f64)
}

/// Checks strict positivity and `|sum - 1| <= SIMPLEX_TOL`, then returns a
/// renormalized copy.
pub fn normalized_positive(p: &[f64], what: &str) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::domain(format!("{what} is empty")));
    }
    if let Some(i) = p.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::domain(format!(
            "{what} entry {i} = {} is not strictly positive",
            p[i]
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::domain(format!("{what} sums to {s}, not 1")));
    }
    Ok(p.iter().map(|x| x / s).collect())
}

/// `R_alpha(p || q) = (1/(alpha-1)) ln sum_i p_i^alpha q_i^(1-alpha)`.
///
/// `OnePlus` gives `sum p ln(p/q)`; `Infinity` gives `max ln(p/q)`.
pub fn renyi_robustness_divergence(p: &[f64], q: &[f64], alpha: RenyiOrder) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let p = normalized_positive(p, "p")?;
    let q = normalized_positive(q, "q")?;
    Ok(match alpha {
        RenyiOrder::OnePlus => p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum(),
        RenyiOrder::Infinity => p
            .iter()
            .zip(&q)
            .map(|(a, b)| (a / b).ln())
            .fold(f64::NEG_INFINITY, f64::max),
        RenyiOrder::Finite(a) => {
            if a <= 1.0 {
                return Err(Error::domain(format!("alpha must exceed 1, got {a}")));
            }
            let terms: Vec<f64> = p
                .iter()
                .zip(&q)
                .map(|(pi, qi)| a * pi.ln() + (1.0 - a) * qi.ln())
                .collect();
            log_sum_exp(&terms) / (a - 1.0)
        }
    })
}
