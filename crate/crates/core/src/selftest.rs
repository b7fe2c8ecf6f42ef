//! Built-in oracle suites, runnable from the command line.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::certify::{worst_case_map, RankedMap, TopKSpec};
use crate::concentration::finite_sample_certificate;
use crate::error::Result;
use crate::eval::{synthetic_task, TaskShape};
use crate::gnd::{eps_alpha_laplace, eps_gaussian, eps_kl_gnd, numeric_renyi_divergence, GndParams};
use crate::interpret::SimpleGradient;
use crate::numeric::sub_seed;
use crate::order::{NormOrder, RenyiOrder};
use crate::scoring::{build_scoring_vector, renyi_robustness_divergence};
use crate::smoother::{expected_map_reference, smooth, SmoothingConfig};

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub const SHAPES: [u32; 4] = [1, 2, 4, 10];
pub const RATIOS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 3.0];
pub const ORDERS: [RenyiOrder; 5] = [
    RenyiOrder::OnePlus,
    RenyiOrder::Finite(1.5),
    RenyiOrder::Finite(2.0),
    RenyiOrder::Finite(5.0),
    RenyiOrder::Finite(20.0),
];

/// Closed-form divergence between unit-scale GNDs shifted by `t`, when one
/// exists for `(b, alpha)`.
pub fn closed_form(shape_b: u32, alpha: RenyiOrder, t: f64) -> Option<Result<f64>> {
    match (shape_b, alpha) {
        (1, a) => Some(eps_alpha_laplace(t, a)),
        (2, a) => Some(eps_gaussian(t, a)),
        (b, RenyiOrder::OnePlus) if b % 2 == 0 => Some(eps_kl_gnd(b, t)),
        _ => None,
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> SuiteReport {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    SuiteReport {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Closed forms against quadrature over the shape/ratio/order grid.
pub fn divergence_suite() -> SuiteReport {
    timed("divergence-vs-quadrature", || {
        let mut worst = 0.0f64;
        let mut count = 0;
        for b in SHAPES {
            for t in RATIOS {
                for a in ORDERS {
                    let Some(closed) = closed_form(b, a, t) else { continue };
                    let closed = closed?;
                    let numeric = numeric_renyi_divergence(GndParams::new(0.0, 1.0, b)?, t, a)?;
                    worst = worst.max((closed - numeric).abs() / closed.abs());
                    count += 1;
                }
            }
        }
        Ok((worst <= 1e-6, format!("{count} grid points, max relative error {worst:.2e}")))
    })
}

/// Random normalized map of length `n` with entries bounded away from zero.
pub fn random_map(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random feasible top-k spec for maps of length `n >= 2`.
pub fn random_spec(rng: &mut ChaCha8Rng, n: usize) -> TopKSpec {
    loop {
        let k = rng.random_range(1..n);
        let j = rng.random_range(1..=k);
        if let Ok(spec) = TopKSpec::new(k, j as f64 / k as f64, n) {
            return spec;
        }
    }
}

/// `R_alpha(witness || m) = eps_robust(m)` on random maps.
pub fn witness_suite(instances: usize, seed: u64) -> SuiteReport {
    timed("witness-tightness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let n = rng.random_range(2..=8);
            let m = random_map(&mut rng, n);
            let spec = random_spec(&mut rng, n);
            let alpha = match rng.random_range(0..3) {
                0 => RenyiOrder::OnePlus,
                1 => RenyiOrder::Finite(1.0 + rng.random_range(1e-3f64..50.0)),
                _ => RenyiOrder::Infinity,
            };
            let w = worst_case_map(&m, spec, alpha)?;
            let r = renyi_robustness_divergence(&w.m_tilde, &m, alpha)?;
            worst = worst.max((r - w.eps_at_alpha).abs());
        }
        Ok((worst <= 1e-9, format!("{instances} maps, max |R - eps| {worst:.2e}")))
    })
}

/// Settings for the resampling check of the finite-sample bound.
#[derive(Debug, Clone)]
pub struct ResamplingSetup {
    pub trials: usize,
    pub samples: usize,
    pub reference_samples: usize,
    pub confidence: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ResamplingOutcome {
    pub trials: usize,
    /// Runs where the reference `eps_robust` fell below `eps_lower`.
    pub misses: usize,
    /// Runs whose lower bound was strictly positive.
    pub informative: usize,
    pub eps_reference: f64,
    pub mean_eps_lower: f64,
}

/// Resamples `T`-sample smoothed maps of a fixed synthetic task and checks
/// how often the reference robustness falls below the finite-sample bound.
pub fn resampling_check(setup: &ResamplingSetup) -> Result<ResamplingOutcome> {
    let shape = TaskShape::default();
    let task = synthetic_task(&shape, setup.seed)?;
    let n = task.image.len();
    let k = n / 4;
    let interp = SimpleGradient::new(task.model.clone());
    let cfg = SmoothingConfig::new(n, setup.samples, 0.1, NormOrder::INFINITY, setup.seed)?.with_scoring(k as f64, 0.25);
    let v_max = build_scoring_vector(n, cfg.k_star, cfg.eta)?.max_weight();
    let spec = TopKSpec::new(k, 0.75, n)?;
    let alpha = RenyiOrder::Finite(2.0);
    let reference = expected_map_reference(&interp, &task.image, &cfg.clone().with_seed(sub_seed(setup.seed, u64::MAX)), setup.reference_samples)?;
    let eps_ref = RankedMap::new(reference.scores(), spec)?.eps_robust(alpha);
    let lowers: Vec<f64> = (0..setup.trials)
        .into_par_iter()
        .map(|trial| {
            let c = cfg.clone().with_seed(sub_seed(setup.seed, trial as u64));
            let m = smooth(&interp, &task.image, &c)?;
            Ok(finite_sample_certificate(m.scores(), spec, alpha, setup.samples, setup.confidence, v_max)?.eps_lower)
        })
        .collect::<Result<_>>()?;
    Ok(ResamplingOutcome {
        trials: setup.trials,
        misses: lowers.iter().filter(|&&l| eps_ref < l).count(),
        informative: lowers.iter().filter(|&&l| l > 0.0).count(),
        eps_reference: eps_ref,
        mean_eps_lower: lowers.iter().sum::<f64>() / lowers.len() as f64,
    })
}

pub fn concentration_suite(setup: &ResamplingSetup) -> SuiteReport {
    timed("concentration-resampling", || {
        let o = resampling_check(setup)?;
        let rate = o.misses as f64 / o.trials as f64;
        Ok((
            rate <= 1.0 - setup.confidence,
            format!(
                "{} of {} runs below the bound ({} informative), reference eps {:.3e}, mean bound {:.3e}",
                o.misses, o.trials, o.informative, o.eps_reference, o.mean_eps_lower
            ),
        ))
    })
}

/// All suites. `quick` shrinks the resampling and witness workloads.
pub fn run_all(quick: bool, seed: u64) -> Vec<SuiteReport> {
    let setup = ResamplingSetup {
        trials: if quick { 100 } else { 1000 },
        samples: 50,
        reference_samples: if quick { 20_000 } else { 100_000 },
        confidence: 0.95,
        seed,
    };
    vec![
        divergence_suite(),
        witness_suite(if quick { 200 } else { 1000 }, seed),
        concentration_suite(&setup),
    ]
}
