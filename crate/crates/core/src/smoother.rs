//! Noise-averaged, rank-rescaled attribution maps.
//!
//! Each of the `T` samples evaluates the base interpreter at `x + delta_t`
//! with `delta_t` drawn from a generalized normal of shape `d*`, replaces the
//! attributions by scoring weights according to their rank, and the results
//! are averaged. Sample `t` draws its noise from its own sub-seed, and the
//! average is assembled from integer rank counts, so the output does not
//! depend on evaluation order or thread count.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::select_shape;
use crate::error::{Error, Result};
use crate::gnd::{GndParams, GndSampler};
use crate::image::Image;
use crate::interpret::Interpreter;
use crate::numeric::sub_seed;
use crate::order::NormOrder;
use crate::scoring::{build_scoring_vector, descending_order, Provenance, SmoothedMap};

pub const DEFAULT_SAMPLES: usize = 50;
pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_ETA: f64 = 1e-4;

/// Samples evaluated per parallel work item.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub samples: usize,
    pub sigma: f64,
    pub d_prior: NormOrder,
    pub d_star: u32,
    pub seed: u64,
    pub k_star: f64,
    pub eta: f64,
}

impl SmoothingConfig {
    /// Shape from the `(d_prior, n)` rule; scoring midpoint at `n / 4`.
    pub fn new(n: usize, samples: usize, sigma: f64, d_prior: NormOrder, seed: u64) -> Result<Self> {
        let cfg = SmoothingConfig {
            samples,
            sigma,
            d_prior,
            d_star: select_shape(d_prior, n),
            seed,
            k_star: (n as f64 / 4.0).max(1.0),
            eta: DEFAULT_ETA,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scoring(mut self, k_star: f64, eta: f64) -> Self {
        self.k_star = k_star;
        self.eta = eta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::param("need at least one sample"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.d_star == 0 {
            return Err(Error::param("noise shape must be >= 1"));
        }
        Ok(())
    }

    pub fn noise(&self) -> Result<GndParams> {
        GndParams::new(0.0, self.sigma, self.d_star)
    }
}

/// Averages `T` rank-rescaled maps at noisy copies of `image`.
pub fn smooth<I: Interpreter + ?Sized>(interp: &I, image: &Image, cfg: &SmoothingConfig) -> Result<SmoothedMap> {
    cfg.validate()?;
    let n = image.len();
    if interp.dims() != image.dims() {
        return Err(Error::DimMismatch {
            expected: interp.dims().len(),
            found: n,
        });
    }
    let v = build_scoring_vector(n, cfg.k_star, cfg.eta)?;
    let sampler = GndSampler::new(cfg.noise()?);
    let x = image.pixels();
    let label = image.label;

    let n_chunks = cfg.samples.div_ceil(CHUNK);
    let partial: Vec<Vec<BTreeMap<u32, u32>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![BTreeMap::new(); n];
            let mut z = vec![0.0; n];
            for t in c * CHUNK..((c + 1) * CHUNK).min(cfg.samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, t as u64));
                sampler.fill(&mut rng, &mut z);
                for (zi, xi) in z.iter_mut().zip(x) {
                    *zi += xi;
                }
                let g = interp.interpret(&z, label).map_err(|e| Error::Interpreter {
                    sample: t,
                    source: Box::new(e),
                })?;
                if g.len() != n {
                    return Err(Error::Interpreter {
                        sample: t,
                        source: Box::new(Error::DimMismatch {
                            expected: n,
                            found: g.len(),
                        }),
                    });
                }
                for (rank, i) in descending_order(g.scores()).into_iter().enumerate() {
                    *counts[i].entry(rank as u32).or_insert(0) += 1;
                }
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![BTreeMap::<u32, u64>::new(); n];
    for chunk in partial {
        for (acc, part) in counts.iter_mut().zip(chunk) {
            for (rank, c) in part {
                *acc.entry(rank).or_insert(0) += c as u64;
            }
        }
    }
    let total = cfg.samples as f64;
    let w = v.weights();
    let scores = counts
        .iter()
        .map(|m| m.iter().map(|(&r, &c)| (c as f64 / total) * w[r as usize]).sum())
        .collect();
    Ok(SmoothedMap::from_parts_unchecked(
        scores,
        cfg.samples,
        Some(Provenance {
            sigma: cfg.sigma,
            d_star: cfg.d_star,
            seed: cfg.seed,
        }),
    ))
}

/// Monte-Carlo stand-in for the expected smoothed map: `smooth` with
/// `t_ref` samples.
pub fn expected_map_reference<I: Interpreter + ?Sized>(
    interp: &I,
    image: &Image,
    cfg: &SmoothingConfig,
    t_ref: usize,
) -> Result<SmoothedMap> {
    smooth(interp, image, &cfg.clone().with_samples(t_ref))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Dims;
    use crate::interpret::{ConstantInterpreter, SimpleGradient};
    use crate::model::{Activation, Architecture, TinyModel};
    use crate::scoring::{rank_rescale, RawMap};

    fn image(n: usize) -> Image {
        Image::new((0..n).map(|i| (i as f64 * 0.37).fract()).collect(), Dims::flat(n), 0).unwrap()
    }

    fn cfg(n: usize, samples: usize, seed: u64) -> SmoothingConfig {
        SmoothingConfig::new(n, samples, 0.3, NormOrder::TWO, seed)
            .unwrap()
            .with_scoring(n as f64 / 4.0, 0.5)
    }

    #[test]
    fn constant_interpreter_is_exact() {
        let raw = RawMap::new(vec![0.3, 2.0, -1.0, 0.7, 0.7, 5.0]).unwrap();
        let interp = ConstantInterpreter::new(raw.clone(), Dims::flat(6)).unwrap();
        let c = cfg(6, 37, 1);
        let v = build_scoring_vector(6, c.k_star, c.eta).unwrap();
        let expected = rank_rescale(&raw, &v).unwrap();
        for t in [1, 3, 37, 100] {
            let m = smooth(&interp, &image(6), &c.clone().with_samples(t)).unwrap();
            assert_eq!(m.scores(), &expected[..]);
        }
    }

    #[test]
    fn linear_model_ignores_seed_and_count() {
        let model = TinyModel::random(Architecture::Linear, Dims::flat(8), 3, 2).unwrap();
        let interp = SimpleGradient::new(model);
        let base = smooth(&interp, &image(8), &cfg(8, 1, 0)).unwrap();
        for (t, seed) in [(5, 1), (64, 9), (200, 3)] {
            let m = smooth(&interp, &image(8), &cfg(8, t, seed)).unwrap();
            assert_eq!(m.scores(), base.scores());
        }
    }

    #[test]
    fn output_is_a_positive_distribution() {
        let arch = Architecture::Mlp {
            hidden: vec![5],
            activation: Activation::Tanh,
        };
        let interp = SimpleGradient::new(TinyModel::random(arch, Dims::flat(10), 2, 1).unwrap());
        let m = smooth(&interp, &image(10), &cfg(10, 77, 4)).unwrap();
        assert!(m.scores().iter().all(|&s| s > 0.0 && s <= 1.0));
        assert!((m.scores().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(m.samples, 77);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let arch = Architecture::Mlp {
            hidden: vec![4],
            activation: Activation::Softplus,
        };
        let interp = SimpleGradient::new(TinyModel::random(arch, Dims::flat(9), 2, 5).unwrap());
        let c = cfg(9, 150, 11);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| smooth(&interp, &image(9), &c).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, smooth(&interp, &image(9), &c).unwrap());
    }

    #[test]
    fn interpreter_errors_name_the_sample() {
        struct Failing;
        impl Interpreter for Failing {
            fn dims(&self) -> Dims {
                Dims::flat(3)
            }
            fn interpret(&self, x: &[f64], _: usize) -> Result<RawMap> {
                if x[0] > 0.5 {
                    Err(Error::domain("boom"))
                } else {
                    RawMap::new(vec![1.0, 2.0, 3.0])
                }
            }
        }
        let img = Image::new(vec![0.5, 0.5, 0.5], Dims::flat(3), 0).unwrap();
        let err = smooth(&Failing, &img, &cfg(3, 10, 0)).unwrap_err();
        assert!(matches!(err, Error::Interpreter { .. }));
    }
}
