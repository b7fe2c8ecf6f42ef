//! Generalized normal (GND) noise: sampling, densities, closed-form Renyi
//! divergences between shifted copies, and a quadrature cross-check.
//!
//! Throughout, `sigma` is the standard deviation. The natural scale is
//! `sigma_star = sigma * sqrt(Gamma(1/b) / Gamma(3/b))`, so `b = 1` is a
//! Laplace law with scale `sigma / sqrt(2)` and `b = 2` is `N(mu, sigma^2)`.
//! Divergence functions take `t = L / sigma`, the shift in units of the
//! noise standard deviation.

use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::binomial;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::numeric::{self, invert_increasing, QuadOptions};
use crate::order::RenyiOrder;

/// Parameters of `G(mu, sigma^2, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GndParams {
    pub mu: f64,
    pub sigma: f64,
    pub shape_b: u32,
}

impl GndParams {
    pub fn new(mu: f64, sigma: f64, shape_b: u32) -> Result<Self> {
        let p = GndParams { mu, sigma, shape_b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.mu.is_finite() {
            return Err(Error::param("mu must be finite"));
        }
        validate_shape(self.shape_b)?;
        Ok(())
    }

    /// `sigma_star`, the scale that appears in the exponent of the density.
    pub fn natural_scale(&self) -> f64 {
        natural_scale_ratio(self.shape_b) * self.sigma
    }

    /// Log density at `x`.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let b = self.shape_b as f64;
        let s = self.natural_scale();
        let z = (x - self.mu).abs() / s;
        b.ln() - std::f64::consts::LN_2 - s.ln() - ln_gamma(1.0 / b) - z.powf(b)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Draws one variate as `mu + sign * sigma_star * G^(1/b)` with
    /// `G ~ Gamma(1/b, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        GndSampler::new(*self).sample(rng)
    }
}

fn validate_shape(b: u32) -> Result<()> {
    if b == 1 || (b >= 2 && b % 2 == 0) {
        Ok(())
    } else {
        Err(Error::param(format!("shape b must be 1 or an even integer >= 2, got {b}")))
    }
}

/// `sqrt(Gamma(1/b) / Gamma(3/b))`.
pub fn natural_scale_ratio(b: u32) -> f64 {
    let b = b as f64;
    (0.5 * (ln_gamma(1.0 / b) - ln_gamma(3.0 / b))).exp()
}

/// Reusable sampler with the Gamma law precomputed.
#[derive(Debug, Clone)]
pub struct GndSampler {
    mu: f64,
    scale: f64,
    inv_b: f64,
    gamma: Gamma<f64>,
}

impl GndSampler {
    pub fn new(params: GndParams) -> Self {
        let inv_b = 1.0 / params.shape_b as f64;
        GndSampler {
            mu: params.mu,
            scale: params.natural_scale(),
            inv_b,
            gamma: Gamma::new(inv_b, 1.0).expect("shape 1/b is positive"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = self.gamma.sample(rng);
        let mag = self.scale * g.powf(self.inv_b);
        if rng.random::<bool>() {
            self.mu + mag
        } else {
            self.mu - mag
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for x in out {
            *x = self.sample(rng);
        }
    }
}

/// `n` i.i.d. draws from `G(mu, sigma^2, b)`, fully determined by `seed`.
pub fn sample_noise(params: GndParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = GndSampler::new(params);
    let mut out = vec![0.0; n];
    sampler.fill(&mut rng, &mut out);
    Ok(out)
}

fn check_ratio(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::domain(format!("shift ratio L/sigma must be >= 0, got {t}")));
    }
    Ok(())
}

/// Renyi divergence `D_alpha(Lap(0, s) || Lap(L, s))` with `s = sigma / sqrt(2)`,
/// as a function of `t = L / sigma`.
///
/// Closed form: `(1/(alpha-1)) ln[ alpha/(2alpha-1) e^{(alpha-1)u}
/// + (alpha-1)/(2alpha-1) e^{-alpha u} ]` with `u = sqrt(2) t`, evaluated in
/// a rearranged form that stays accurate for `alpha` near 1 and large `u`.
/// `OnePlus` gives the KL limit `u + e^{-u} - 1`, `Infinity` gives `u`.
pub fn eps_alpha_laplace(t: f64, alpha: RenyiOrder) -> Result<f64> {
    check_ratio(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let u = SQRT_2 * t;
    Ok(match alpha {
        RenyiOrder::OnePlus => u + (-u).exp_m1(),
        RenyiOrder::Infinity => u,
        RenyiOrder::Finite(a) => {
            if a <= 1.0 {
                return Err(Error::domain(format!("alpha must exceed 1, got {a}")));
            }
            let c = (a - 1.0) / (2.0 * a - 1.0);
            let w = -(-(2.0 * a - 1.0) * u).exp_m1();
            u + (-c * w).ln_1p() / (a - 1.0)
        }
    })
}

/// `D_alpha(N(0, sigma^2) || N(L, sigma^2)) = alpha t^2 / 2`.
pub fn eps_gaussian(t: f64, alpha: RenyiOrder) -> Result<f64> {
    check_ratio(t)?;
    Ok(match alpha {
        RenyiOrder::OnePlus => 0.5 * t * t,
        RenyiOrder::Finite(a) => {
            if a < 1.0 {
                return Err(Error::domain(format!("alpha must be >= 1, got {a}")));
            }
            0.5 * a * t * t
        }
        RenyiOrder::Infinity => {
            if t == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
    })
}

/// KL divergence (the `alpha -> 1+` Renyi limit) between `G(0, sigma, b)`
/// and `G(L, sigma, b)` for even `b`:
///
/// `(1/Gamma(1/b)) * sum_{i=1}^{b/2} C(b, 2i) (L/sigma_star)^{2i} Gamma((b+1-2i)/b)`.
pub fn eps_kl_gnd(shape_b: u32, t: f64) -> Result<f64> {
    if shape_b < 2 || shape_b % 2 != 0 {
        return Err(Error::domain(format!("shape b must be even and >= 2, got {shape_b}")));
    }
    check_ratio(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let b = shape_b as f64;
    let r = t / natural_scale_ratio(shape_b);
    let mut sum = 0.0;
    for i in 1..=(shape_b / 2) {
        let two_i = 2 * i;
        let term = binomial(shape_b as u64, two_i as u64)
            * r.powi(two_i as i32)
            * gamma((b + 1.0 - two_i as f64) / b);
        sum += term;
    }
    Ok(sum / gamma(1.0 / b))
}

/// A monotone noise-to-divergence map that can be inverted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceKind {
    Laplace(RenyiOrder),
    Gaussian(RenyiOrder),
    KlGnd(u32),
}

impl DivergenceKind {
    pub fn forward(&self, t: f64) -> Result<f64> {
        match *self {
            DivergenceKind::Laplace(a) => eps_alpha_laplace(t, a),
            DivergenceKind::Gaussian(a) => eps_gaussian(t, a),
            DivergenceKind::KlGnd(b) => eps_kl_gnd(b, t),
        }
    }

    /// The unique `t >= 0` with `forward(t) = eps`.
    pub fn invert(&self, eps: f64) -> Result<f64> {
        invert_divergence(*self, eps)
    }
}

/// Inverts a forward divergence map. Closed form for the Gaussian; bisection
/// on the monotone forward map otherwise.
pub fn invert_divergence(kind: DivergenceKind, eps: f64) -> Result<f64> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::domain(format!("divergence level must be >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    match kind {
        DivergenceKind::Gaussian(RenyiOrder::Finite(a)) => return Ok((2.0 * eps / a).sqrt()),
        DivergenceKind::Gaussian(RenyiOrder::OnePlus) => return Ok((2.0 * eps).sqrt()),
        DivergenceKind::Gaussian(RenyiOrder::Infinity) => return Ok(0.0),
        DivergenceKind::Laplace(RenyiOrder::Infinity) => return Ok(eps / SQRT_2),
        _ => {}
    }
    // validate once so the closure can unwrap
    kind.forward(1.0)?;
    invert_increasing(|t| kind.forward(t).expect("validated"), eps, 1e-15)
}

/// Renyi divergence between `G(mu, sigma, b)` and `G(mu + L, sigma, b)` by
/// adaptive quadrature. Validation oracle for the closed forms above.
///
/// Finite orders are integrated in the log domain: the peak of
/// `alpha ln p + (1 - alpha) ln q` is located on a grid, the window is
/// widened until the integrand has decayed by `e^-80` at both ends, and the
/// peak value is factored out before integrating.
pub fn numeric_renyi_divergence(params: GndParams, shift_l: f64, alpha: RenyiOrder) -> Result<f64> {
    params.validate()?;
    if !(shift_l >= 0.0 && shift_l.is_finite()) {
        return Err(Error::domain(format!("shift must be finite and >= 0, got {shift_l}")));
    }
    if shift_l == 0.0 {
        return Ok(0.0);
    }
    let p = params;
    let q = GndParams {
        mu: params.mu + shift_l,
        ..params
    };
    let s = params.natural_scale();
    let b = params.shape_b as f64;
    // ln p - ln q, free of the shared normalizing constant
    let log_ratio = |x: f64| ((x - q.mu).abs() / s).powf(b) - ((x - p.mu).abs() / s).powf(b);
    let breaks = [p.mu, q.mu];
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-12,
        max_intervals: 20_000,
    };

    match alpha {
        RenyiOrder::OnePlus => {
            // p concentrates within (60)^(1/b) + 1 natural scales of mu
            let reach = s * (60f64.powf(1.0 / b) + 1.0);
            let (lo, hi) = (p.mu - reach, p.mu + reach.max(shift_l + s));
            let quad = numeric::integrate(|x| p.pdf(x) * log_ratio(x), lo, hi, &breaks, opts)?;
            Ok(quad.value)
        }
        RenyiOrder::Infinity => {
            // sup of ln p/q; for these families it is attained as x -> -inf
            // for b = 1 and is infinite for b >= 2
            if params.shape_b == 1 {
                Ok(shift_l / s)
            } else {
                Ok(f64::INFINITY)
            }
        }
        RenyiOrder::Finite(a) => {
            if a <= 1.0 {
                return Err(Error::domain(format!("alpha must exceed 1, got {a}")));
            }
            let log_f = |x: f64| p.ln_pdf(x) + (a - 1.0) * log_ratio(x);
            let (lo, hi, peak_x, peak) = log_window(&log_f, p.mu - 20.0 * s, q.mu + 20.0 * s, s)?;
            let mut pts = breaks.to_vec();
            pts.push(peak_x);
            let quad = numeric::integrate(|x| (log_f(x) - peak).exp(), lo, hi, &pts, opts)?;
            if !(quad.value > 0.0) {
                return Err(Error::Numeric {
                    routine: "numeric_renyi_divergence",
                    detail: format!(
                        "integral collapsed to {} on [{lo}, {hi}] (peak {peak} at {peak_x})",
                        quad.value
                    ),
                });
            }
            Ok((peak + quad.value.ln()) / (a - 1.0))
        }
    }
}

/// Finds a window `[lo, hi]` outside of which `log_f` sits at least 80 below
/// its maximum. Returns the window, the argmax and the max.
fn log_window<F: Fn(f64) -> f64>(
    log_f: &F,
    mut lo: f64,
    mut hi: f64,
    scale: f64,
) -> Result<(f64, f64, f64, f64)> {
    const GRID: usize = 4001;
    const DROP: f64 = 80.0;
    for _ in 0..60 {
        let step = (hi - lo) / (GRID - 1) as f64;
        let (mut best_x, mut best) = (lo, f64::NEG_INFINITY);
        for i in 0..GRID {
            let x = lo + step * i as f64;
            let v = log_f(x);
            if v > best {
                best = v;
                best_x = x;
            }
        }
        // polish the peak inside the best grid cell
        let (px, pv) = numeric::golden_max(log_f, best_x - step, best_x + step, 1e-14);
        let (peak_x, peak) = if pv > best { (px, pv) } else { (best_x, best) };
        let left_ok = log_f(lo) < peak - DROP;
        let right_ok = log_f(hi) < peak - DROP;
        if left_ok && right_ok {
            return Ok((lo, hi, peak_x, peak));
        }
        let width = (hi - lo).max(scale);
        if !left_ok {
            lo -= width;
        }
        if !right_ok {
            hi += width;
        }
    }
    Err(Error::Numeric {
        routine: "numeric_renyi_divergence",
        detail: format!("integrand did not decay inside [{lo}, {hi}]"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_2PI_INV: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn pdf_reductions() {
        let g = GndParams::new(0.0, 1.0, 2).unwrap();
        assert!((g.pdf(0.0) - SQRT_2PI_INV).abs() < 1e-14);
        let l = GndParams::new(0.0, 1.0, 1).unwrap();
        assert!((l.pdf(0.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn pdf_normalizes() {
        for b in [1, 2, 4, 10] {
            let g = GndParams::new(0.3, 0.7, b).unwrap();
            let s = g.natural_scale();
            let q = numeric::integrate(
                |x| g.pdf(x),
                g.mu - 60.0 * s,
                g.mu + 60.0 * s,
                &[g.mu],
                QuadOptions::default(),
            )
            .unwrap();
            assert!((q.value - 1.0).abs() < 1e-8, "b = {b}: {}", q.value);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GndParams::new(0.0, 1.0, 3).is_err());
        assert!(GndParams::new(0.0, 1.0, 0).is_err());
        assert!(GndParams::new(0.0, 0.0, 2).is_err());
        let bad = GndParams {
            mu: 0.0,
            sigma: 1.0,
            shape_b: 5,
        };
        assert!(sample_noise(bad, 3, 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = GndParams::new(0.0, 1.0, 4).unwrap();
        let a = sample_noise(g, 64, 42).unwrap();
        let b = sample_noise(g, 64, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_noise(g, 64, 43).unwrap());
    }

    #[test]
    fn laplace_values() {
        let a2 = RenyiOrder::Finite(2.0);
        assert_eq!(eps_alpha_laplace(0.0, a2).unwrap(), 0.0);
        // mpmath quadrature of the shifted Laplace pair
        let v = eps_alpha_laplace(SQRT_2, a2).unwrap();
        assert!((v - 1.595_773_500_587_617_8).abs() < 1e-12, "{v}");
        let v = eps_alpha_laplace(1.0, RenyiOrder::Finite(5.0)).unwrap();
        assert!((v - 1.267_267_489_568_909_4).abs() < 1e-12, "{v}");
        let kl = eps_alpha_laplace(1.0, RenyiOrder::OnePlus).unwrap();
        assert!((kl - 0.657_330_296_807_309_3).abs() < 1e-12);
        // large alpha approaches the D_inf value sqrt(2) t
        let big = eps_alpha_laplace(0.8, RenyiOrder::Finite(1e7)).unwrap();
        assert!((big - SQRT_2 * 0.8).abs() < 1e-6);
        assert_eq!(eps_alpha_laplace(0.8, RenyiOrder::Infinity).unwrap(), SQRT_2 * 0.8);
        assert!(eps_alpha_laplace(-1.0, a2).is_err());
        assert!(eps_alpha_laplace(1.0, RenyiOrder::Finite(0.5)).is_err());
    }

    #[test]
    fn gaussian_values() {
        assert_eq!(eps_gaussian(1.0, RenyiOrder::Finite(2.0)).unwrap(), 1.0);
        assert_eq!(eps_gaussian(0.0, RenyiOrder::Finite(7.0)).unwrap(), 0.0);
        assert_eq!(eps_gaussian(2.0, RenyiOrder::OnePlus).unwrap(), 2.0);
    }

    #[test]
    fn kl_gnd_values() {
        assert!((eps_kl_gnd(2, 1.0).unwrap() - 0.5).abs() < 1e-14);
        // mpmath quadrature: KL(G(0,1,4) || G(1,1,4))
        let v = eps_kl_gnd(4, 1.0).unwrap();
        assert!((v - 0.799_656_516_827_811_3).abs() < 1e-12, "{v}");
        let v = eps_kl_gnd(10, 0.5).unwrap();
        assert!((v - 0.594_003_390_134_040_2).abs() < 1e-12, "{v}");
        assert_eq!(eps_kl_gnd(6, 0.0).unwrap(), 0.0);
        assert!(eps_kl_gnd(3, 1.0).is_err());
        assert!(eps_kl_gnd(1, 1.0).is_err());
    }

    #[test]
    fn inversion_examples() {
        let t = invert_divergence(DivergenceKind::Gaussian(RenyiOrder::Finite(2.0)), 1.0).unwrap();
        assert!((t - 1.0).abs() < 1e-14);
        let t = invert_divergence(DivergenceKind::KlGnd(2), 0.5).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        assert!(invert_divergence(DivergenceKind::KlGnd(2), -0.1).is_err());
    }

    #[test]
    fn inversion_round_trips() {
        let kinds = [
            DivergenceKind::Laplace(RenyiOrder::Finite(1.5)),
            DivergenceKind::Laplace(RenyiOrder::Finite(20.0)),
            DivergenceKind::Laplace(RenyiOrder::OnePlus),
            DivergenceKind::Gaussian(RenyiOrder::Finite(3.0)),
            DivergenceKind::KlGnd(4),
            DivergenceKind::KlGnd(10),
        ];
        for kind in kinds {
            for i in 0..=30 {
                let t = 0.1 * i as f64;
                let eps = kind.forward(t).unwrap();
                let back = kind.invert(eps).unwrap();
                assert!((back - t).abs() < 1e-8, "{kind:?} t = {t}: {back}");
                let again = kind.forward(back).unwrap();
                assert!((again - eps).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn quadrature_matches_examples() {
        let g = GndParams::new(0.0, 1.0, 2).unwrap();
        let v = numeric_renyi_divergence(g, 1.0, RenyiOrder::Finite(2.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        let l = GndParams::new(0.0, 1.0, 1).unwrap();
        let v = numeric_renyi_divergence(l, SQRT_2, RenyiOrder::Finite(2.0)).unwrap();
        let closed = eps_alpha_laplace(SQRT_2, RenyiOrder::Finite(2.0)).unwrap();
        assert!((v - closed).abs() < 1e-6);
        let g4 = GndParams::new(0.0, 1.0, 4).unwrap();
        assert_eq!(numeric_renyi_divergence(g4, 0.0, RenyiOrder::Finite(3.0)).unwrap(), 0.0);
    }

    #[test]
    fn forward_maps_strictly_increase() {
        let kinds = [
            DivergenceKind::Laplace(RenyiOrder::Finite(2.0)),
            DivergenceKind::Gaussian(RenyiOrder::Finite(2.0)),
            DivergenceKind::KlGnd(6),
        ];
        for kind in kinds {
            let mut prev = kind.forward(0.0).unwrap();
            for i in 1..=60 {
                let cur = kind.forward(0.05 * i as f64).unwrap();
                assert!(cur > prev, "{kind:?} not increasing at step {i}");
                prev = cur;
            }
        }
    }
}
