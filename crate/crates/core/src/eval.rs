//! Pointing-game scores, synthetic masked tasks and parameter sweeps.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{topk_attack, AttackConfig};
use crate::certify::certify_beta;
use crate::error::{Error, Result};
use crate::image::{Dims, Image};
use crate::interpret::SimpleGradient;
use crate::model::{Activation, Architecture, TinyModel};
use crate::numeric::sub_seed;
use crate::order::NormOrder;
use crate::scoring::{top_k_overlap, top_k_set};
use crate::smoother::{smooth, SmoothingConfig};

pub const CSV_HEADER: [&str; 7] = ["axis", "value", "beta_exp", "beta_theory", "point_hard", "point_soft", "seconds"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointingScore {
    /// `+1` if the inside ratio reaches `tau`, else `-1`.
    pub hard: i8,
    /// Fraction of the top-k inside the mask.
    pub soft: f64,
}

pub const DEFAULT_TAU: f64 = 0.5;

pub fn pointing_score(map: &[f64], mask: &[bool], k: usize, tau: f64) -> Result<PointingScore> {
    if map.len() != mask.len() {
        return Err(Error::DimMismatch {
            expected: map.len(),
            found: mask.len(),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::domain("object mask is empty"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::domain(format!("tau must be in (0, 1], got {tau}")));
    }
    let top = top_k_set(map, k)?;
    let soft = top.iter().filter(|&&i| mask[i]).count() as f64 / k as f64;
    Ok(PointingScore {
        hard: if soft >= tau { 1 } else { -1 },
        soft,
    })
}

/// An image with a rectangular object, its mask, and a classifier whose
/// input weights are amplified inside the object.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub image: Image,
    pub mask: Vec<bool>,
    pub model: TinyModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskShape {
    pub height: usize,
    pub width: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub n_classes: usize,
    /// Weight multiplier for object pixels.
    pub object_gain: f64,
}

impl Default for TaskShape {
    fn default() -> Self {
        TaskShape {
            height: 8,
            width: 8,
            hidden: vec![16],
            activation: Activation::Tanh,
            n_classes: 3,
            object_gain: 3.0,
        }
    }
}

impl TaskShape {
    pub fn dims(&self) -> Dims {
        Dims::new(self.height, self.width, 1)
    }
}

pub fn synthetic_task(shape: &TaskShape, seed: u64) -> Result<SyntheticTask> {
    let dims = shape.dims();
    if shape.height < 2 || shape.width < 2 {
        return Err(Error::param("synthetic images need at least 2x2 pixels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oh = rng.random_range(shape.height / 4 + 1..=shape.height / 2);
    let ow = rng.random_range(shape.width / 4 + 1..=shape.width / 2);
    let top = rng.random_range(0..=shape.height - oh);
    let left = rng.random_range(0..=shape.width - ow);
    let mut mask = vec![false; dims.len()];
    let mut pixels = vec![0.0; dims.len()];
    for r in 0..shape.height {
        for c in 0..shape.width {
            let i = dims.index(r, c, 0);
            let inside = (top..top + oh).contains(&r) && (left..left + ow).contains(&c);
            mask[i] = inside;
            pixels[i] = if inside {
                rng.random_range(0.6..1.0)
            } else {
                rng.random_range(0.0..0.3)
            };
        }
    }
    let arch = Architecture::Mlp {
        hidden: shape.hidden.clone(),
        activation: shape.activation,
    };
    let base = TinyModel::random(arch.clone(), dims, shape.n_classes, sub_seed(seed, 1))?;
    let mut weights = base.weights().to_vec();
    let first = shape.hidden.first().copied().unwrap_or(shape.n_classes);
    let n = dims.len();
    for row in 0..first {
        for (i, &inside) in mask.iter().enumerate() {
            if inside {
                weights[row * n + i] *= shape.object_gain;
            }
        }
    }
    // a little jitter so that rows differ between tasks with equal masks
    let mut jrng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 2));
    for w in weights.iter_mut().take(first * n) {
        let z: f64 = jrng.sample(StandardNormal);
        *w += 1e-3 * z;
    }
    let model = TinyModel::from_parts(arch, dims, shape.n_classes, weights)?;
    let label = model.predict(&pixels)?;
    Ok(SyntheticTask {
        image: Image::new(pixels, dims, label)?,
        mask,
        model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    K,
    Sigma,
    L,
    T,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::Sigma => "sigma",
            SweepAxis::L => "L",
            SweepAxis::T => "T",
        }
    }
}

/// Settings shared by every cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepBase {
    pub task: TaskShape,
    pub k: usize,
    pub sigma: f64,
    pub attack_size: f64,
    pub samples: usize,
    pub d_prior: NormOrder,
    pub eta: f64,
    pub attack_lr: f64,
    pub attack_iterations: usize,
    pub tau: f64,
}

impl Default for SweepBase {
    fn default() -> Self {
        SweepBase {
            task: TaskShape::default(),
            k: 16,
            sigma: 0.1,
            attack_size: 8.0 / 256.0,
            samples: 50,
            d_prior: NormOrder::INFINITY,
            eta: 0.25,
            attack_lr: 0.5,
            attack_iterations: 300,
            tau: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub base: SweepBase,
    pub repetitions: usize,
    pub seed: u64,
    /// Fill the `seconds` column with wall time. Off by default so that
    /// sweep output is byte-reproducible.
    #[serde(default)]
    pub record_time: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::param("sweep needs at least one value"));
        }
        if self.repetitions == 0 {
            return Err(Error::param("sweep needs at least one repetition"));
        }
        Ok(())
    }
}

/// One repetition at one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub value: f64,
    pub repetition: usize,
    pub beta_exp: f64,
    pub beta_theory: f64,
    pub point_hard: i8,
    pub point_soft: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub beta_exp: f64,
    pub beta_theory: f64,
    pub point_hard: f64,
    pub point_soft: f64,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellOutcome>,
    /// `(value, repetition, message)` for cells that failed.
    pub failures: Vec<(f64, usize, String)>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Numeric {
            routine: "csv",
            detail: e.to_string(),
        };
        w.write_record(CSV_HEADER).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.axis.clone(),
                fmt(r.value),
                fmt(r.beta_exp),
                fmt(r.beta_theory),
                fmt(r.point_hard),
                fmt(r.point_soft),
                format!("{:.3}", r.seconds),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("writing sweep csv", e))?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Runs one cell: smooth the clean image, attack the base interpreter,
/// smooth the attacked image with the same noise, and compare.
pub fn run_cell(spec: &SweepSpec, value: f64, repetition: usize) -> Result<CellOutcome> {
    let start = Instant::now();
    let mut p = spec.base.clone();
    match spec.axis {
        SweepAxis::K => p.k = value as usize,
        SweepAxis::Sigma => p.sigma = value,
        SweepAxis::L => p.attack_size = value,
        SweepAxis::T => p.samples = value as usize,
    }
    let task = synthetic_task(&p.task, sub_seed(spec.seed, repetition as u64))?;
    let n = task.image.len();
    let interp = SimpleGradient::new(task.model.clone());
    let cfg = SmoothingConfig::new(n, p.samples, p.sigma, p.d_prior, sub_seed(spec.seed ^ 0x5eed, repetition as u64))?
        .with_scoring(p.k as f64, p.eta);
    let clean = smooth(&interp, &task.image, &cfg)?;
    let acfg = AttackConfig::new(p.k, p.attack_size, p.d_prior)
        .with_lr(p.attack_lr)
        .with_iterations(p.attack_iterations);
    let adv = topk_attack(&interp, &task.image, &acfg)?;
    let attacked = smooth(&interp, &adv.x_adv, &cfg)?;
    let beta_exp = top_k_overlap(clean.scores(), attacked.scores(), p.k)?;
    let beta_theory = certify_beta(clean.scores(), p.k, p.attack_size, p.sigma, p.d_prior)?.beta;
    let point = pointing_score(clean.scores(), &task.mask, p.k, p.tau)?;
    Ok(CellOutcome {
        value,
        repetition,
        beta_exp,
        beta_theory,
        point_hard: point.hard,
        point_soft: point.soft,
        seconds: if spec.record_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        },
    })
}

/// Runs every `(value, repetition)` cell, in parallel, and averages per
/// value. Failed cells are reported and skipped.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let jobs: Vec<(f64, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.repetitions).map(move |r| (v, r)))
        .collect();
    let results: Vec<Result<CellOutcome>> = jobs.par_iter().map(|&(v, r)| run_cell(spec, v, r)).collect();
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for ((v, r), res) in jobs.iter().zip(results) {
        match res {
            Ok(c) => cells.push(c),
            Err(e) => failures.push((*v, *r, e.to_string())),
        }
    }
    let rows = spec
        .values
        .iter()
        .map(|&v| {
            let these: Vec<&CellOutcome> = cells.iter().filter(|c| c.value == v).collect();
            let mean = |f: &dyn Fn(&CellOutcome) -> f64| {
                if these.is_empty() {
                    f64::NAN
                } else {
                    these.iter().map(|c| f(c)).sum::<f64>() / these.len() as f64
                }
            };
            SweepRow {
                axis: spec.axis.name().to_string(),
                value: v,
                beta_exp: mean(&|c| c.beta_exp),
                beta_theory: mean(&|c| c.beta_theory),
                point_hard: mean(&|c| c.point_hard as f64),
                point_soft: mean(&|c| c.point_soft),
                seconds: these.iter().map(|c| c.seconds).sum(),
            }
        })
        .collect();
    Ok(SweepTable { rows, cells, failures })
}
