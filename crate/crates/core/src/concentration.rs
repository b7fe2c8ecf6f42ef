//! Finite-sample lower bounds on the robustness parameter.
//!
//! A smoothed map estimated from `T` samples is an average of `T` vectors
//! whose coordinates lie in `[0, max v]`. Hoeffding plus a union bound over
//! both tails of all `n` coordinates gives `|m_hat - m|_inf <= delta` with the
//! requested confidence. `phi` is concave, so on that event
//! `phi(m) <= phi(m_hat) + delta * sum_S |d phi / d m_i|`, which lower-bounds
//! `eps_robust(m) = -ln(1 + phi(m))`.

use serde::{Deserialize, Serialize};

use crate::certify::{certify_beta_by, certify_with, RankedMap, RobustnessCertificate, TopKSpec};
use crate::error::{Error, Result};
use crate::order::{NormOrder, RenyiOrder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationBound {
    pub samples: usize,
    pub confidence: f64,
    pub alpha: RenyiOrder,
    /// Per-coordinate deviation radius.
    pub delta_coord: f64,
    /// `sum_S (psi^alpha m_i^-alpha - 1)`, the signed gradient sum of `phi`.
    pub lipschitz_c: f64,
    /// `sum_S |psi^alpha m_i^-alpha - 1|`, the constant used in `eps_lower`.
    pub lipschitz_abs: f64,
    pub phi_hat: f64,
    pub psi_hat: f64,
    pub eps_hat: f64,
    pub eps_lower: f64,
}

/// `range * sqrt(ln(events / (1 - confidence)) / (2 T))`.
pub fn hoeffding_radius(events: usize, samples: usize, confidence: f64, range: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain(format!("confidence must be in (0, 1), got {confidence}")));
    }
    if samples == 0 || events == 0 {
        return Err(Error::domain("need at least one sample and one event"));
    }
    let log_term = (events as f64 / (1.0 - confidence)).ln();
    Ok(range * (log_term / (2.0 * samples as f64)).sqrt())
}

/// Partial derivatives `d phi / d m_i` over the boundary, in boundary order.
///
/// At `alpha = inf` `phi` is `2 k0 min_S - sum_S`; the supergradient puts all
/// of the `2 k0` weight on the first minimizer.
pub fn phi_gradient(ranked: &RankedMap, alpha: RenyiOrder) -> Vec<f64> {
    let vals = ranked.boundary_values();
    let psi = ranked.power_mean(alpha);
    match alpha {
        RenyiOrder::Infinity => {
            let j = vals
                .iter()
                .enumerate()
                .fold(0, |j, (i, &v)| if v < vals[j] { i } else { j });
            let mut g = vec![-1.0; vals.len()];
            g[j] += vals.len() as f64;
            g
        }
        _ => {
            let a = match alpha {
                RenyiOrder::Finite(a) => a,
                _ => 1.0,
            };
            let lp = psi.ln();
            vals.iter().map(|&m| (a * (lp - m.ln())).exp() - 1.0).collect()
        }
    }
}

/// Signed constant `psi^alpha sum_S m_i^-alpha - 2 k0`. Nonnegative by the
/// power-mean inequality.
pub fn lipschitz_constant(m_hat: &[f64], spec: TopKSpec, alpha: RenyiOrder) -> Result<f64> {
    let ranked = RankedMap::new(m_hat, spec)?;
    let c: f64 = phi_gradient(&ranked, alpha).iter().sum();
    debug_assert!(c >= -1e-9, "power-mean inequality violated: {c}");
    Ok(c.max(0.0))
}

/// `sum_S |d phi / d m_i|`: the l1 norm of the gradient, which bounds the
/// first-order change of `phi` under any `l_inf` perturbation of size one.
pub fn lipschitz_abs(m_hat: &[f64], spec: TopKSpec, alpha: RenyiOrder) -> Result<f64> {
    let ranked = RankedMap::new(m_hat, spec)?;
    Ok(phi_gradient(&ranked, alpha).iter().map(|g| g.abs()).sum())
}

/// Deviation radius for a `T`-sample smoothed map with scoring entries in
/// `[0, v_max]`.
pub fn map_deviation_radius(n: usize, samples: usize, confidence: f64, v_max: f64) -> Result<f64> {
    hoeffding_radius(2 * n, samples, confidence, v_max)
}

fn bound_on(ranked: &RankedMap, alpha: RenyiOrder, delta: f64) -> (f64, f64, f64, f64, f64) {
    let g = phi_gradient(ranked, alpha);
    let c: f64 = g.iter().sum();
    let c_abs: f64 = g.iter().map(|x| x.abs()).sum();
    let phi = ranked.phi(alpha);
    let eps_lower = 0.0 - (phi + delta * c_abs).min(0.0).ln_1p();
    (c.max(0.0), c_abs, phi, ranked.power_mean(alpha), eps_lower)
}

/// Lower confidence bound on `eps_robust` of the expected map at one order.
pub fn finite_sample_certificate(
    m_hat: &[f64],
    spec: TopKSpec,
    alpha: RenyiOrder,
    samples: usize,
    confidence: f64,
    v_max: f64,
) -> Result<ConcentrationBound> {
    let ranked = RankedMap::new(m_hat, spec)?;
    let delta = map_deviation_radius(spec.n, samples, confidence, v_max)?;
    let (c, c_abs, phi, psi, eps_lower) = bound_on(&ranked, alpha, delta);
    Ok(ConcentrationBound {
        samples,
        confidence,
        alpha,
        delta_coord: delta,
        lipschitz_c: c,
        lipschitz_abs: c_abs,
        phi_hat: phi,
        psi_hat: psi,
        eps_hat: ranked.eps_robust(alpha),
        eps_lower,
    })
}

/// `alpha -> eps_lower(alpha)` for a fixed deviation radius.
pub fn lower_profile(ranked: &RankedMap, alpha: RenyiOrder, delta: f64) -> f64 {
    bound_on(ranked, alpha, delta).4
}

/// Certified attack size from the lower bound, re-maximized over `alpha`.
pub fn certify_max_attack_lower(
    m_hat: &[f64],
    spec: TopKSpec,
    sigma: f64,
    d_prior: NormOrder,
    samples: usize,
    confidence: f64,
    v_max: f64,
) -> Result<(RobustnessCertificate, ConcentrationBound)> {
    let ranked = RankedMap::new(m_hat, spec)?;
    let delta = map_deviation_radius(spec.n, samples, confidence, v_max)?;
    let cert = certify_with(|a| lower_profile(&ranked, a, delta), spec, sigma, d_prior)?;
    let bound = finite_sample_certificate(m_hat, spec, cert.alpha_star, samples, confidence, v_max)?;
    Ok((cert, bound))
}

/// Certified `beta` from the lower bound.
pub fn certify_beta_lower(
    m_hat: &[f64],
    k: usize,
    attack_size: f64,
    sigma: f64,
    d_prior: NormOrder,
    samples: usize,
    confidence: f64,
    v_max: f64,
) -> Result<RobustnessCertificate> {
    let delta = map_deviation_radius(m_hat.len(), samples, confidence, v_max)?;
    certify_beta_by(m_hat, k, attack_size, sigma, d_prior, |r, a| lower_profile(r, a, delta))
}
