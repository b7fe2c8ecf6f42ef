//! Top-k robustness certificates.
//!
//! For a normalized map `m` sorted descending, the boundary set `S` is the
//! `2 k0` ranks `k-k0+1 ..= k+k0` straddling the top-k cut. Displacing `k0`
//! members of the top-k requires the attacker to tie those ranks. Pooling
//! every boundary entry at their `(1 - alpha)` power mean `psi` and
//! renormalizing is the cheapest way to tie all of them at one level, with
//! divergence
//!
//! ```text
//! eps_robust(alpha) = -ln(2 k0 psi + sum_{i not in S} m_i) = -ln(1 + phi),
//! phi = sum_{i in S} (psi - m_i)
//! ```
//!
//! Certificates are calibrated against this value. It is not always the
//! smallest divergence that breaks the top-k spec: when the boundary entries are
//! spread out, leaving some of them in place is cheaper, so for such maps
//! `min_violating_divergence` is lower and a certificate can be optimistic.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnd::{invert_divergence, DivergenceKind};
use crate::numeric::{golden_max, log_mean_exp};
use crate::order::{NormOrder, RenyiOrder};
use crate::scoring::{descending_order, normalized_positive};

/// Grid and search settings for the supremum over `alpha`.
pub const ALPHA_MIN: f64 = 1.0 + 1e-6;
pub const ALPHA_MAX: f64 = 1e3;
pub const ALPHA_GRID: usize = 200;

/// `(k, beta)` with the derived displacement count `k0 = floor((1-beta) k) + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKSpec {
    pub k: usize,
    pub beta: f64,
    pub k0: usize,
    pub n: usize,
}

impl TopKSpec {
    pub fn new(k: usize, beta: f64, n: usize) -> Result<Self> {
        k0_and_boundary(k, beta, n)
    }

    /// Zero-based sorted ranks of the boundary set.
    pub fn boundary(&self) -> Range<usize> {
        (self.k - self.k0)..(self.k + self.k0)
    }

    /// One-based boundary ranks, as usually written.
    pub fn boundary_ranks(&self) -> Vec<usize> {
        self.boundary().map(|r| r + 1).collect()
    }
}

/// `k0 = floor((1 - beta) k) + 1`, computed with a 1e-9 guard so that
/// `beta = j / k` lands on the intended integer.
pub fn displacement_count(k: usize, beta: f64) -> usize {
    ((1.0 - beta) * k as f64 + 1e-9).floor() as usize + 1
}

pub fn k0_and_boundary(k: usize, beta: f64, n: usize) -> Result<TopKSpec> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::domain(format!("beta must be in (0, 1], got {beta}")));
    }
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    let k0 = displacement_count(k, beta);
    if k0 > k || k + k0 > n {
        return Err(Error::InfeasibleSpec { k, k0, n });
    }
    Ok(TopKSpec { k, beta, k0, n })
}

/// Noise shape for a defender who expects `l_d` attacks with `d <= d_prior`:
/// 1 for `d_prior = 1`, otherwise `d_prior` rounded up to an even integer,
/// capped at `2 ceil(ln(n) / 2)`.
pub fn select_shape(d_prior: NormOrder, n: usize) -> u32 {
    let cap = shape_cap(n);
    let d = d_prior.value();
    if d <= 1.0 {
        1
    } else if d <= cap as f64 {
        (2.0 * (d / 2.0).ceil()) as u32
    } else {
        cap
    }
}

/// `2 ceil(ln(n) / 2)`, never below 2.
pub fn shape_cap(n: usize) -> u32 {
    let c = 2.0 * ((n.max(2) as f64).ln() / 2.0).ceil();
    (c as u32).max(2)
}

/// True when `d_prior` exceeds the shape cap, which costs a factor `e^-1`
/// on the certified radius.
pub fn dimension_penalty(d_prior: NormOrder, n: usize) -> bool {
    d_prior.value() > shape_cap(n) as f64
}

/// A normalized map sorted once, with its boundary split out.
#[derive(Debug, Clone)]
pub struct RankedMap {
    sorted: Vec<f64>,
    order: Vec<usize>,
    spec: TopKSpec,
}

impl RankedMap {
    pub fn new(m: &[f64], spec: TopKSpec) -> Result<Self> {
        if m.len() != spec.n {
            return Err(Error::DimMismatch {
                expected: spec.n,
                found: m.len(),
            });
        }
        let m = normalized_positive(m, "map")?;
        let order = descending_order(&m);
        let sorted = order.iter().map(|&i| m[i]).collect();
        Ok(RankedMap { sorted, order, spec })
    }

    pub fn spec(&self) -> TopKSpec {
        self.spec
    }

    /// Entries at the boundary ranks, descending.
    pub fn boundary_values(&self) -> &[f64] {
        &self.sorted[self.spec.boundary()]
    }

    /// Sorted values, descending.
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Original position of each sorted rank.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `psi`: the `(1 - alpha)` power mean of the boundary entries.
    pub fn power_mean(&self, alpha: RenyiOrder) -> f64 {
        power_mean(self.boundary_values(), alpha)
    }

    /// `phi = 2 k0 psi - sum_S m_i <= 0`.
    pub fn phi(&self, alpha: RenyiOrder) -> f64 {
        let psi = self.power_mean(alpha);
        self.boundary_values().iter().map(|&x| psi - x).sum()
    }

    pub fn eps_robust(&self, alpha: RenyiOrder) -> f64 {
        eps_from_phi(self.phi(alpha))
    }
}

pub(crate) fn eps_from_phi(phi: f64) -> f64 {
    0.0 - phi.min(0.0).ln_1p()
}

/// Power mean of order `1 - alpha` (geometric mean at `1+`, minimum at
/// infinity). Exact when all values coincide.
pub fn power_mean(vals: &[f64], alpha: RenyiOrder) -> f64 {
    let first = vals[0];
    if vals.iter().all(|&v| v == first) {
        return first;
    }
    match alpha {
        RenyiOrder::OnePlus => {
            (vals.iter().map(|v| v.ln()).sum::<f64>() / vals.len() as f64).exp()
        }
        RenyiOrder::Infinity => vals.iter().copied().fold(f64::INFINITY, f64::min),
        RenyiOrder::Finite(a) => {
            let p = 1.0 - a;
            let xs: Vec<f64> = vals.iter().map(|v| p * v.ln()).collect();
            (log_mean_exp(&xs) / p).exp()
        }
    }
}

/// `eps_robust(alpha)` for map `m` under `spec`.
pub fn eps_robust(m: &[f64], spec: TopKSpec, alpha: RenyiOrder) -> Result<f64> {
    Ok(RankedMap::new(m, spec)?.eps_robust(alpha))
}

/// The minimizing adversarial map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseSolution {
    pub m_tilde: Vec<f64>,
    pub m_breve: f64,
    pub eps_at_alpha: f64,
}

/// Worst-case witness: boundary entries set to `psi / (1 + phi)`, all others
/// to `m_i / (1 + phi)`. Its divergence from `m`, `R_alpha(m_tilde || m)`,
/// equals `eps_robust(alpha)`.
pub fn worst_case_map(m: &[f64], spec: TopKSpec, alpha: RenyiOrder) -> Result<WorstCaseSolution> {
    let ranked = RankedMap::new(m, spec)?;
    let psi = ranked.power_mean(alpha);
    let phi = ranked.phi(alpha);
    let denom = 1.0 + phi;
    let boundary = spec.boundary();
    let mut m_tilde = vec![0.0; spec.n];
    for (rank, &pos) in ranked.order.iter().enumerate() {
        let v = if boundary.contains(&rank) {
            psi
        } else {
            ranked.sorted[rank]
        };
        m_tilde[pos] = v / denom;
    }
    Ok(WorstCaseSolution {
        m_tilde,
        m_breve: psi,
        eps_at_alpha: eps_from_phi(phi),
    })
}

/// Smallest `R_alpha(q || m)` over maps `q` whose top-k loses at least `k0`
/// entries, up to ties. Only the lifted entries need to reach the level of
/// the dropped ones, so `q` clips the lower `k0` of the top-k down to a level
/// `tau`, raises the upper `k0` outsiders to `tau` and leaves everything else
/// proportional to `m`; `tau` is found by a 1-D search. Never exceeds
/// `eps_robust`, and equals it when every boundary entry ends up at `tau`.
pub fn min_violating_divergence(m: &[f64], spec: TopKSpec, alpha: RenyiOrder) -> Result<WorstCaseSolution> {
    let ranked = RankedMap::new(m, spec)?;
    let m = normalized_positive(m, "map")?;
    let (lo, hi) = (spec.k - spec.k0, spec.k + spec.k0);
    let build = |tau: f64| -> Vec<f64> {
        let mut q = m.clone();
        for (rank, &pos) in ranked.order.iter().enumerate().take(hi).skip(lo) {
            q[pos] = if rank < spec.k { q[pos].min(tau) } else { q[pos].max(tau) };
        }
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= s);
        q
    };
    let objective = |log_tau: f64| {
        let q = build(log_tau.exp());
        -crate::scoring::renyi_robustness_divergence(&q, &m, alpha).unwrap_or(f64::INFINITY)
    };
    let (a, b) = (ranked.sorted[hi - 1].ln(), ranked.sorted[lo].ln());
    let (mut best_t, mut best) = (a, objective(a));
    const GRID: usize = 64;
    for i in 1..=GRID {
        let t = a + (b - a) * i as f64 / GRID as f64;
        let v = objective(t);
        if v > best {
            (best_t, best) = (t, v);
        }
    }
    let step = (b - a) / GRID as f64;
    let (t, v) = golden_max(objective, (best_t - step).max(a), (best_t + step).min(b), 1e-12);
    if v > best {
        (best_t, best) = (t, v);
    }
    Ok(WorstCaseSolution {
        m_tilde: build(best_t.exp()),
        m_breve: best_t.exp(),
        eps_at_alpha: 0.0 - best,
    })
}

/// Which row of the noise/attack table produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRow {
    /// `d_prior = 1`, Laplace noise.
    Laplace,
    /// `d_prior in (1, 2]`, Gaussian noise.
    Gaussian,
    /// `d_prior in (2, inf]`, GND noise with `b = d_star`.
    Gnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertMode {
    MaxAttackSize,
    MaxBeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCertificate {
    pub mode: CertMode,
    pub row: NoiseRow,
    pub d_prior: NormOrder,
    pub d_star: u32,
    pub sigma: f64,
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub k0: usize,
    /// Certified (or queried) attack size.
    pub l: f64,
    pub alpha_star: RenyiOrder,
    pub eps_robust: f64,
    pub dimension_penalty_applied: bool,
    /// The maximizing order sat on the upper end of the search grid.
    pub sup_at_cap: bool,
    /// For `d_prior = 2`, the (looser) GND-row radius, kept for reference.
    pub alt_gnd_l: Option<f64>,
}

/// Maximizer of `objective` over `alpha in (1, inf]`: log-spaced grid on
/// `alpha - 1`, golden-section refinement around the best grid point, and an
/// optional closed-form candidate at infinity.
#[derive(Debug, Clone, Copy)]
pub struct AlphaSup {
    pub alpha: RenyiOrder,
    pub value: f64,
    pub at_cap: bool,
}

pub fn sup_over_alpha<F: Fn(RenyiOrder) -> f64>(objective: F, include_infinity: bool) -> AlphaSup {
    let lo = (ALPHA_MIN - 1.0).ln();
    let hi = (ALPHA_MAX - 1.0).ln();
    let u_of = |i: usize| lo + (hi - lo) * i as f64 / (ALPHA_GRID - 1) as f64;
    let at = |u: f64| objective(RenyiOrder::Finite(1.0 + u.exp()));
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..ALPHA_GRID {
        let v = at(u_of(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut best_u = u_of(best_i);
    let a = u_of(best_i.saturating_sub(1));
    let b = u_of((best_i + 1).min(ALPHA_GRID - 1));
    if b > a {
        let (u, v) = golden_max(at, a, b, 1e-10);
        if v > best {
            best = v;
            best_u = u;
        }
    }
    let mut alpha = RenyiOrder::Finite(1.0 + best_u.exp());
    let at_cap = best_i == ALPHA_GRID - 1;
    if include_infinity {
        let v = objective(RenyiOrder::Infinity);
        if v > best {
            best = v;
            alpha = RenyiOrder::Infinity;
        }
    }
    AlphaSup {
        alpha,
        value: best,
        at_cap,
    }
}

/// Row (a): `sup_alpha eps_alpha^{-1}(eps(alpha))`, as `L / sigma`.
pub fn laplace_radius_ratio<F: Fn(RenyiOrder) -> f64>(eps: F) -> AlphaSup {
    sup_over_alpha(
        |a| {
            invert_divergence(DivergenceKind::Laplace(a), eps(a))
                .expect("eps_robust is finite and nonnegative")
        },
        true,
    )
}

/// Row (b): `sup_alpha sqrt(2 eps(alpha) / alpha)`, as `L / sigma`.
pub fn gaussian_radius_ratio<F: Fn(RenyiOrder) -> f64>(eps: F) -> AlphaSup {
    sup_over_alpha(|a| (2.0 * eps(a) / a.value()).sqrt(), false)
}

/// Row (c): `eps_{d*}^{-1}(eps(1+))`, as `L / sigma` before the dimension
/// penalty.
pub fn gnd_radius_ratio(eps_one_plus: f64, d_star: u32) -> Result<f64> {
    if d_star == 1 {
        return invert_divergence(DivergenceKind::Laplace(RenyiOrder::OnePlus), eps_one_plus);
    }
    invert_divergence(DivergenceKind::KlGnd(d_star), eps_one_plus)
}

/// Largest attack size `L` for which `m` stays `beta`-top-k robust.
pub fn certify_max_attack(
    m: &[f64],
    spec: TopKSpec,
    sigma: f64,
    d_prior: NormOrder,
) -> Result<RobustnessCertificate> {
    let ranked = RankedMap::new(m, spec)?;
    certify_with(|a| ranked.eps_robust(a), spec, sigma, d_prior)
}

/// Like `certify_max_attack`, but against `min_violating_divergence`, so the
/// radius never exceeds the pooled one. Slower: each order costs a 1-D search.
pub fn certify_max_attack_exact(
    m: &[f64],
    spec: TopKSpec,
    sigma: f64,
    d_prior: NormOrder,
) -> Result<RobustnessCertificate> {
    let m = normalized_positive(m, "map")?;
    RankedMap::new(&m, spec)?;
    certify_with(
        |a| min_violating_divergence(&m, spec, a).map_or(0.0, |w| w.eps_at_alpha.max(0.0)),
        spec,
        sigma,
        d_prior,
    )
}

/// Table dispatch for an arbitrary robustness profile `eps(alpha)`.
pub fn certify_with<F: Fn(RenyiOrder) -> f64>(
    eps: F,
    spec: TopKSpec,
    sigma: f64,
    d_prior: NormOrder,
) -> Result<RobustnessCertificate> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let n = spec.n;
    let d_star = select_shape(d_prior, n);
    let d = d_prior.value();
    let mut cert = RobustnessCertificate {
        mode: CertMode::MaxAttackSize,
        row: row_for(d_prior),
        d_prior,
        d_star,
        sigma,
        n,
        k: spec.k,
        beta: spec.beta,
        k0: spec.k0,
        l: 0.0,
        alpha_star: RenyiOrder::OnePlus,
        eps_robust: 0.0,
        dimension_penalty_applied: false,
        sup_at_cap: false,
        alt_gnd_l: None,
    };
    if d <= 2.0 {
        let sup = if d <= 1.0 {
            laplace_radius_ratio(&eps)
        } else {
            gaussian_radius_ratio(&eps)
        };
        cert.l = sigma * sup.value;
        cert.alpha_star = sup.alpha;
        cert.eps_robust = eps(sup.alpha);
        cert.sup_at_cap = sup.at_cap;
        if d == 2.0 {
            cert.alt_gnd_l = Some(sigma * gnd_radius_ratio(eps(RenyiOrder::OnePlus), d_star)?);
        }
    } else {
        let penalty = dimension_penalty(d_prior, n);
        let factor = if penalty { (-1.0f64).exp() } else { 1.0 };
        let e = eps(RenyiOrder::OnePlus);
        cert.l = sigma * factor * gnd_radius_ratio(e, d_star)?;
        cert.eps_robust = e;
        cert.dimension_penalty_applied = penalty;
    }
    Ok(cert)
}

/// Largest `beta` on the grid `{j / k}` whose certified radius reaches
/// `attack_size`. Specs with `k + k0 > n` cannot be violated at all and count
/// as certified for every radius.
pub fn certify_beta(
    m: &[f64],
    k: usize,
    attack_size: f64,
    sigma: f64,
    d_prior: NormOrder,
) -> Result<RobustnessCertificate> {
    certify_beta_by(m, k, attack_size, sigma, d_prior, |r, a| r.eps_robust(a))
}

/// `certify_beta` against `min_violating_divergence`.
pub fn certify_beta_exact(
    m: &[f64],
    k: usize,
    attack_size: f64,
    sigma: f64,
    d_prior: NormOrder,
) -> Result<RobustnessCertificate> {
    certify_beta_by(m, k, attack_size, sigma, d_prior, |r, a| {
        min_violating_divergence(r.sorted(), r.spec(), a).map_or(0.0, |w| w.eps_at_alpha.max(0.0))
    })
}

/// `certify_beta` with a custom robustness profile evaluated on the ranked
/// map of each candidate spec.
pub fn certify_beta_by<P: Fn(&RankedMap, RenyiOrder) -> f64>(
    m: &[f64],
    k: usize,
    attack_size: f64,
    sigma: f64,
    d_prior: NormOrder,
    profile: P,
) -> Result<RobustnessCertificate> {
    if !(attack_size >= 0.0) {
        return Err(Error::domain(format!("attack size must be >= 0, got {attack_size}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let n = m.len();
    if k == 0 || k > n {
        return Err(Error::domain(format!("k = {k} out of range 1..={n}")));
    }
    let m = normalized_positive(m, "map")?;
    let d_star = select_shape(d_prior, n);

    let certify_j = |j: usize| -> Result<Option<RobustnessCertificate>> {
        let beta = j as f64 / k as f64;
        match TopKSpec::new(k, beta, n) {
            Ok(spec) => {
                let ranked = RankedMap::new(&m, spec)?;
                Ok(Some(certify_with(|a| profile(&ranked, a), spec, sigma, d_prior)?))
            }
            Err(Error::InfeasibleSpec { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    // smallest j whose spec is feasible: k0 = k - j + 1 <= n - k
    let j_min = (2 * k + 1).saturating_sub(n).max(1);
    let vacuous_beta = (j_min - 1) as f64 / k as f64;
    let mut best: Option<RobustnessCertificate> = None;
    if j_min <= k {
        // predicate "certified L >= attack_size" is monotone in j
        let (mut lo, mut hi) = (j_min, k);
        while lo <= hi {
            let mid = (lo + hi) / 2;
            let cert = certify_j(mid)?.expect("j >= j_min is feasible");
            if cert.l >= attack_size {
                best = Some(cert);
                lo = mid + 1;
            } else {
                if mid == 0 {
                    break;
                }
                hi = mid - 1;
            }
        }
    }
    let mut cert = match best {
        Some(c) => c,
        None => RobustnessCertificate {
            mode: CertMode::MaxBeta,
            row: row_for(d_prior),
            d_prior,
            d_star,
            sigma,
            n,
            k,
            beta: vacuous_beta,
            k0: k - j_min.saturating_sub(1) + 1,
            l: attack_size,
            alpha_star: RenyiOrder::OnePlus,
            eps_robust: 0.0,
            dimension_penalty_applied: dimension_penalty(d_prior, n) && d_prior.value() > 2.0,
            sup_at_cap: false,
            alt_gnd_l: None,
        },
    };
    cert.mode = CertMode::MaxBeta;
    cert.l = attack_size;
    Ok(cert)
}

fn row_for(d_prior: NormOrder) -> NoiseRow {
    let d = d_prior.value();
    if d <= 1.0 {
        NoiseRow::Laplace
    } else if d <= 2.0 {
        NoiseRow::Gaussian
    } else {
        NoiseRow::Gnd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::renyi_robustness_divergence;

    const M4: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

    #[test]
    fn k0_examples() {
        let s = TopKSpec::new(5, 0.8, 10).unwrap();
        assert_eq!(s.k0, 2);
        assert_eq!(s.boundary_ranks(), vec![4, 5, 6, 7]);
        assert_eq!(TopKSpec::new(2500, 0.9, 10_000).unwrap().k0, 251);
        let s = TopKSpec::new(1, 1.0, 2).unwrap();
        assert_eq!((s.k0, s.boundary_ranks()), (1, vec![1, 2]));
        assert!(matches!(
            TopKSpec::new(3, 0.5, 4),
            Err(Error::InfeasibleSpec { .. })
        ));
        assert!(TopKSpec::new(3, 0.0, 10).is_err());
    }

    #[test]
    fn shape_rule() {
        assert_eq!(select_shape(NormOrder::ONE, 1000), 1);
        assert_eq!(select_shape(NormOrder::new(3.0).unwrap(), 1_000_000), 4);
        assert_eq!(select_shape(NormOrder::INFINITY, 10_000), 10);
        assert_eq!(select_shape(NormOrder::new(1.5).unwrap(), 50), 2);
        assert_eq!(select_shape(NormOrder::new(20.0).unwrap(), 10_000), 10);
        assert!(dimension_penalty(NormOrder::INFINITY, 10_000));
        assert!(!dimension_penalty(NormOrder::new(10.0).unwrap(), 10_000));
    }

    #[test]
    fn eps_robust_examples() {
        let spec = TopKSpec::new(1, 1.0, 4).unwrap();
        let e = eps_robust(&M4, spec, RenyiOrder::Finite(2.0)).unwrap();
        // harmonic mean of (0.4, 0.3) is 0.342857...; -ln(2 psi + 0.3)
        let expected = -(2.0 * (2.0 / (2.5 + 10.0 / 3.0)) + 0.3f64).ln();
        assert!((e - expected).abs() < 1e-15);
        assert!((e - 0.014_388_737_452_099_5).abs() < 1e-12);

        let uniform = vec![0.125; 8];
        let spec = TopKSpec::new(3, 0.4, 8).unwrap();
        for a in [RenyiOrder::OnePlus, RenyiOrder::Finite(3.0), RenyiOrder::Infinity] {
            assert_eq!(eps_robust(&uniform, spec, a).unwrap(), 0.0);
        }
        assert!(eps_robust(&[0.5, 0.5, 0.0], TopKSpec::new(1, 1.0, 3).unwrap(), RenyiOrder::OnePlus).is_err());
    }

    #[test]
    fn eps_robust_nondecreasing_in_alpha() {
        let m = [0.31, 0.22, 0.17, 0.12, 0.1, 0.08];
        let spec = TopKSpec::new(2, 0.5, 6).unwrap();
        let r = RankedMap::new(&m, spec).unwrap();
        let mut prev_arg = f64::INFINITY;
        let mut prev_eps = -1.0;
        for a in [1.0 + 1e-6, 1.2, 1.5, 2.0, 3.0, 8.0, 50.0, 500.0] {
            let phi = r.phi(RenyiOrder::Finite(a));
            let arg = 1.0 + phi;
            let eps = r.eps_robust(RenyiOrder::Finite(a));
            assert!(arg <= prev_arg + 1e-15 && eps >= prev_eps - 1e-15);
            prev_arg = arg;
            prev_eps = eps;
        }
        assert!(r.eps_robust(RenyiOrder::Infinity) >= prev_eps);
        assert!(r.eps_robust(RenyiOrder::OnePlus) <= r.eps_robust(RenyiOrder::Finite(1.0 + 1e-6)) + 1e-9);
    }

    #[test]
    fn witness_example() {
        let spec = TopKSpec::new(1, 1.0, 4).unwrap();
        let w = worst_case_map(&M4, spec, RenyiOrder::Finite(2.0)).unwrap();
        let want = [0.347_826_086_956_521_7, 0.347_826_086_956_521_7, 0.202_898_550_724_637_7, 0.101_449_275_362_318_8];
        for (a, b) in w.m_tilde.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((w.m_tilde.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let r = renyi_robustness_divergence(&w.m_tilde, &M4, RenyiOrder::Finite(2.0)).unwrap();
        assert!((r - w.eps_at_alpha).abs() < 1e-12);

        let uniform = vec![0.2; 5];
        let w = worst_case_map(&uniform, TopKSpec::new(2, 1.0, 5).unwrap(), RenyiOrder::Finite(4.0)).unwrap();
        assert_eq!(w.m_tilde, uniform);
    }

    #[test]
    fn witness_keeps_original_positions() {
        let m = [0.1, 0.4, 0.2, 0.3];
        let spec = TopKSpec::new(1, 1.0, 4).unwrap();
        let w = worst_case_map(&m, spec, RenyiOrder::Finite(2.0)).unwrap();
        assert_eq!(w.m_tilde[1], w.m_tilde[3]);
        assert!(w.m_tilde[2] > w.m_tilde[0]);
    }

    #[test]
    fn exact_minimum_matches_single_swap() {
        let m = [0.05, 0.4, 0.15, 0.25, 0.1, 0.05];
        let spec = TopKSpec::new(2, 1.0, 6).unwrap();
        assert_eq!(spec.k0, 1);
        for alpha in [RenyiOrder::OnePlus, RenyiOrder::Finite(2.0), RenyiOrder::Finite(9.0)] {
            let exact = min_violating_divergence(&m, spec, alpha).unwrap().eps_at_alpha;
            let closed = eps_robust(&m, spec, alpha).unwrap();
            assert!((exact - closed).abs() < 1e-9, "{alpha}: {exact} vs {closed}");
        }
    }

    #[test]
    fn exact_minimum_can_undercut_pooling() {
        let m = [0.6, 0.3, 0.09, 0.01];
        let spec = TopKSpec::new(2, 0.4, 4).unwrap();
        assert_eq!(spec.k0, 2);
        let alpha = RenyiOrder::Finite(2.0);
        let w = min_violating_divergence(&m, spec, alpha).unwrap();
        let closed = eps_robust(&m, spec, alpha).unwrap();
        assert!(w.eps_at_alpha < closed - 0.1, "{} vs {closed}", w.eps_at_alpha);
        let q = &w.m_tilde;
        assert!(q[2].min(q[3]) >= q[0].max(q[1]) - 1e-12);
        let r = crate::scoring::renyi_robustness_divergence(q, &m, alpha).unwrap();
        assert!((r - w.eps_at_alpha).abs() < 1e-12);
        for d in [NormOrder::ONE, NormOrder::TWO, NormOrder::INFINITY] {
            let pooled = certify_max_attack(&m, spec, 0.2, d).unwrap().l;
            let exact = certify_max_attack_exact(&m, spec, 0.2, d).unwrap().l;
            assert!(exact < pooled, "{d}: {exact} vs {pooled}");
        }
    }

    proptest::proptest! {
        #[test]
        fn exact_minimum_never_exceeds_pooled(
            raw in proptest::collection::vec(0.01f64..1.0, 3..10),
            k_frac in 0.0f64..1.0,
            j_frac in 0.0f64..1.0,
            a in 1.01f64..40.0,
        ) {
            let n = raw.len();
            let s: f64 = raw.iter().sum();
            let m: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let k = 1 + (k_frac * (n - 1) as f64) as usize;
            let j = 1 + (j_frac * k as f64) as usize;
            if let Ok(spec) = TopKSpec::new(k, j.min(k) as f64 / k as f64, n) {
                for alpha in [RenyiOrder::Finite(a), RenyiOrder::Infinity] {
                    let exact = min_violating_divergence(&m, spec, alpha).unwrap().eps_at_alpha;
                    let pooled = eps_robust(&m, spec, alpha).unwrap();
                    proptest::prop_assert!(exact <= pooled + 1e-9, "{} > {}", exact, pooled);
                }
            }
        }
    }

    #[test]
    fn uniform_map_certifies_zero() {
        let uniform = vec![0.1; 10];
        let spec = TopKSpec::new(3, 0.67, 10).unwrap();
        for d in [NormOrder::ONE, NormOrder::TWO, NormOrder::new(3.0).unwrap(), NormOrder::INFINITY] {
            let c = certify_max_attack(&uniform, spec, 0.5, d).unwrap();
            assert_eq!(c.l, 0.0, "{d}");
        }
    }

    #[test]
    fn gaussian_row_matches_dense_sweep() {
        let spec = TopKSpec::new(1, 1.0, 4).unwrap();
        let c = certify_max_attack(&M4, spec, 0.1, NormOrder::TWO).unwrap();
        let r = RankedMap::new(&M4, spec).unwrap();
        // independent dense sweep over alpha in [1 + 1e-6, 1e3]
        let mut dense = 0.0f64;
        let (lo, hi) = ((1e-6f64).ln(), (999.0f64).ln());
        for i in 0..100_000 {
            let a = 1.0 + (lo + (hi - lo) * i as f64 / 99_999.0).exp();
            let v = (2.0 * r.eps_robust(RenyiOrder::Finite(a)) / a).sqrt();
            dense = dense.max(v);
        }
        let dense_l = 0.1 * dense;
        assert!(c.l > 0.0);
        assert!((c.l - dense_l).abs() <= 1e-6 * dense_l, "{} vs {}", c.l, dense_l);
        assert!(c.l >= dense_l * (1.0 - 1e-9));
        assert_eq!(c.row, NoiseRow::Gaussian);
        assert!(c.alt_gnd_l.unwrap() <= c.l + 1e-15);
    }

    #[test]
    fn l_scales_linearly_in_sigma() {
        let m = [0.3, 0.25, 0.2, 0.15, 0.1];
        let spec = TopKSpec::new(2, 1.0, 5).unwrap();
        for d in [NormOrder::ONE, NormOrder::TWO, NormOrder::INFINITY] {
            let a = certify_max_attack(&m, spec, 0.1, d).unwrap().l;
            let b = certify_max_attack(&m, spec, 0.37, d).unwrap().l;
            assert!((b / a - 3.7).abs() < 1e-12, "{d}: {a} {b}");
        }
    }

    #[test]
    fn gnd_row_penalty() {
        let m: Vec<f64> = (1..=20).rev().map(|x| x as f64 / 210.0).collect();
        let spec = TopKSpec::new(5, 0.8, 20).unwrap();
        let inf = certify_max_attack(&m, spec, 1.0, NormOrder::INFINITY).unwrap();
        let cap = certify_max_attack(&m, spec, 1.0, NormOrder::new(4.0).unwrap()).unwrap();
        assert_eq!(inf.d_star, 4);
        assert_eq!(cap.d_star, 4);
        assert!(inf.dimension_penalty_applied && !cap.dimension_penalty_applied);
        assert!((inf.l - cap.l * (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn certify_beta_limits() {
        let m: Vec<f64> = (1..=12).rev().map(|x| x as f64 / 78.0).collect();
        let c = certify_beta(&m, 4, 0.0, 0.5, NormOrder::INFINITY).unwrap();
        assert_eq!(c.beta, 1.0);
        let c = certify_beta(&m, 4, 1e6, 0.5, NormOrder::INFINITY).unwrap();
        assert_eq!(c.beta, 0.0);
        let mut prev = 1.0;
        for l in [0.0, 0.01, 0.05, 0.1, 0.2, 0.5] {
            let b = certify_beta(&m, 4, l, 0.5, NormOrder::TWO).unwrap().beta;
            assert!(b <= prev);
            prev = b;
        }
    }

    #[test]
    fn certify_beta_counts_unviolatable_specs() {
        // n = 5, k = 4: at most one element can enter the top-4
        let m = [0.3, 0.25, 0.2, 0.15, 0.1];
        let c = certify_beta(&m, 4, 1e6, 0.5, NormOrder::TWO).unwrap();
        assert_eq!(c.beta, 0.75);
    }
}
