//! Iterative attack that pushes the clean top-k pixels out of the
//! attribution map while staying inside an `l_d` ball.
//!
//! The objective is `D(z) = -sum_{i in B} g(z)_i` with `B` the clean top-k
//! set. Each step moves along `grad D` (sign steps for `l_inf`, unit-`l2`
//! steps otherwise), projects back onto the ball around `x` and clamps to
//! the valid intensity range. The best iterate seen is returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::interpret::{DifferentiableInterpreter, Interpreter};
use crate::order::NormOrder;
use crate::scoring::{top_k_overlap, top_k_set};

pub const DEFAULT_LR: f64 = 0.5;
pub const DEFAULT_ITERATIONS: usize = 300;
pub const DEFAULT_BUDGET: f64 = 8.0 / 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepNormalization {
    /// `lr * sign(grad)`.
    Sign,
    /// `lr * grad / |grad|_2`.
    L2Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Analytic,
    /// Central differences of `D` with the given step.
    FiniteDifference { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub k: usize,
    pub budget: f64,
    pub norm: NormOrder,
    pub lr: f64,
    pub iterations: usize,
    pub step: StepNormalization,
    pub gradient: GradientMode,
    /// Skip iterates whose predicted label differs from the clean one.
    pub enforce_label: bool,
}

impl AttackConfig {
    /// Defaults: `lr = 0.5`, 300 iterations, sign steps for `l_inf` and
    /// `l2`-normalized steps otherwise.
    pub fn new(k: usize, budget: f64, norm: NormOrder) -> Self {
        AttackConfig {
            k,
            budget,
            norm,
            lr: DEFAULT_LR,
            iterations: DEFAULT_ITERATIONS,
            step: if norm.is_infinite() {
                StepNormalization::Sign
            } else {
                StepNormalization::L2Norm
            },
            gradient: GradientMode::Analytic,
            enforce_label: false,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(Error::param(format!("attack budget must be >= 0, got {}", self.budget)));
        }
        if self.iterations == 0 {
            return Err(Error::param("attack needs at least one iteration"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.k == 0 || self.k > n {
            return Err(Error::domain(format!("k = {} out of range 1..={n}", self.k)));
        }
        if let GradientMode::FiniteDifference { step } = self.gradient {
            if !(step > 0.0) {
                return Err(Error::param("finite-difference step must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub x_adv: Image,
    /// `D` at every iterate, starting with the clean input.
    pub objective_trace: Vec<f64>,
    /// `|x_t - x|_d` at every iterate.
    pub distance_trace: Vec<f64>,
    pub best_iteration: usize,
    pub iterations_run: usize,
    /// Top-k overlap between the attributions at `x` and at `x_adv`.
    pub achieved_overlap: f64,
    pub clean_top_k: Vec<usize>,
    pub step: StepNormalization,
    pub label_flipped: Option<bool>,
}

/// Euclidean-style projection onto `{z : |z - x|_d <= radius}`: radial
/// scaling for finite `d`, coordinate clipping for `d = inf`.
pub fn project_ball(z: &[f64], x: &[f64], d: NormOrder, radius: f64) -> Vec<f64> {
    if d.is_infinite() {
        return z
            .iter()
            .zip(x)
            .map(|(&zi, &xi)| xi + (zi - xi).clamp(-radius, radius))
            .collect();
    }
    let dist = d.distance(z, x);
    if dist <= radius {
        return z.to_vec();
    }
    z.iter().zip(x).map(|(&zi, &xi)| xi + radius * (zi - xi) / dist).collect()
}

fn objective<I: Interpreter + ?Sized>(interp: &I, z: &[f64], label: usize, set: &[usize]) -> Result<f64> {
    let g = interp.interpret(z, label)?;
    Ok(-set.iter().map(|&i| g.scores()[i]).sum::<f64>())
}

/// Attack with analytic (or, if configured, finite-difference) gradients.
pub fn topk_attack<I: DifferentiableInterpreter + ?Sized>(
    interp: &I,
    image: &Image,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    run(interp, image, cfg, Some(&|z: &[f64], u: &[f64]| interp.attribution_vjp(z, image.label, u)), &|z| {
        interp.predict(z)
    })
}

/// Attack on an interpreter without derivatives; requires finite-difference
/// mode.
pub fn topk_attack_black_box<I: Interpreter + ?Sized>(
    interp: &I,
    image: &Image,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    run(interp, image, cfg, None, &|_| None)
}

type Vjp<'a> = &'a dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>>;

fn run<I: Interpreter + ?Sized>(
    interp: &I,
    image: &Image,
    cfg: &AttackConfig,
    vjp: Option<Vjp<'_>>,
    predict: &dyn Fn(&[f64]) -> Option<usize>,
) -> Result<AttackResult> {
    let x = image.pixels();
    let n = x.len();
    cfg.validate(n)?;
    let label = image.label;
    let clean = interp.interpret(x, label)?;
    let set = top_k_set(clean.scores(), cfg.k)?;
    let mut indicator = vec![0.0; n];
    for &i in &set {
        indicator[i] = 1.0;
    }
    let clean_pred = predict(x);

    let grad = |z: &[f64]| -> Result<Vec<f64>> {
        match cfg.gradient {
            GradientMode::Analytic => {
                let vjp = vjp.ok_or_else(|| {
                    Error::Unsupported("analytic attack gradients need a differentiable interpreter".into())
                })?;
                Ok(vjp(z, &indicator)?.into_iter().map(|v| -v).collect())
            }
            GradientMode::FiniteDifference { step } => {
                let mut w = z.to_vec();
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    w[i] = z[i] + step;
                    let up = objective(interp, &w, label, &set)?;
                    w[i] = z[i] - step;
                    let down = objective(interp, &w, label, &set)?;
                    w[i] = z[i];
                    out.push((up - down) / (2.0 * step));
                }
                Ok(out)
            }
        }
    };

    let mut z = x.to_vec();
    let d0 = objective(interp, x, label, &set)?;
    let mut trace = vec![d0];
    let mut distances = vec![0.0];
    let (mut best, mut best_val, mut best_t) = (z.clone(), d0, 0);
    let mut iterations_run = 0;
    for t in 1..=cfg.iterations {
        let g = grad(&z)?;
        let step: Vec<f64> = match cfg.step {
            StepNormalization::Sign => g.iter().map(|&v| if v == 0.0 { 0.0 } else { v.signum() }).collect(),
            StepNormalization::L2Norm => {
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    vec![0.0; n]
                } else {
                    g.iter().map(|v| v / norm).collect()
                }
            }
        };
        if step.iter().all(|&s| s == 0.0) {
            // stationary: every later iterate would repeat this one
            trace.resize(cfg.iterations + 1, *trace.last().unwrap());
            distances.resize(cfg.iterations + 1, *distances.last().unwrap());
            break;
        }
        let moved: Vec<f64> = z.iter().zip(&step).map(|(zi, si)| zi + cfg.lr * si).collect();
        z = project_ball(&moved, x, cfg.norm, cfg.budget);
        z.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        iterations_run = t;
        let val = objective(interp, &z, label, &set)?;
        trace.push(val);
        distances.push(cfg.norm.distance(&z, x));
        let admissible = !cfg.enforce_label || clean_pred.is_none() || predict(&z) == clean_pred;
        if admissible && val > best_val {
            best_val = val;
            best = z.clone();
            best_t = t;
        }
    }
    let adv = interp.interpret(&best, label)?;
    let achieved_overlap = top_k_overlap(clean.scores(), adv.scores(), cfg.k)?;
    let label_flipped = clean_pred.map(|c| predict(&best) != Some(c));
    Ok(AttackResult {
        x_adv: Image::new(best, image.dims(), label)?,
        objective_trace: trace,
        distance_trace: distances,
        best_iteration: best_t,
        iterations_run,
        achieved_overlap,
        clean_top_k: set,
        step: cfg.step,
        label_flipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Dims;
    use crate::interpret::SimpleGradient;
    use crate::model::{Activation, Architecture, TinyModel};

    #[test]
    fn projection_examples() {
        assert_eq!(project_ball(&[3.0, 4.0], &[0.0, 0.0], NormOrder::TWO, 1.0), vec![0.6, 0.8]);
        assert_eq!(project_ball(&[2.0, -0.5], &[0.0, 0.0], NormOrder::INFINITY, 1.0), vec![1.0, -0.5]);
        assert_eq!(project_ball(&[0.1, 0.2], &[0.0, 0.0], NormOrder::TWO, 1.0), vec![0.1, 0.2]);
        let p = project_ball(&[1.0, 2.0, 2.0], &[0.0; 3], NormOrder::new(3.0).unwrap(), 0.5);
        assert!((NormOrder::new(3.0).unwrap().norm(&p) - 0.5).abs() < 1e-12);
    }

    fn mlp_case(seed: u64) -> (SimpleGradient, Image) {
        let arch = Architecture::Mlp {
            hidden: vec![8],
            activation: Activation::Tanh,
        };
        let model = TinyModel::random(arch, Dims::flat(12), 3, seed).unwrap();
        let x: Vec<f64> = (0..12).map(|i| ((i as f64 + seed as f64) * 0.618).fract()).collect();
        (SimpleGradient::new(model), Image::new(x, Dims::flat(12), 0).unwrap())
    }

    #[test]
    fn zero_budget_returns_clean_image() {
        let (interp, img) = mlp_case(1);
        let r = topk_attack(&interp, &img, &AttackConfig::new(3, 0.0, NormOrder::INFINITY).with_iterations(20)).unwrap();
        assert_eq!(r.x_adv, img);
        assert_eq!(r.achieved_overlap, 1.0);
    }

    #[test]
    fn linear_model_is_unmoved() {
        let model = TinyModel::random(Architecture::Linear, Dims::flat(6), 2, 3).unwrap();
        let img = Image::new(vec![0.5; 6], Dims::flat(6), 1).unwrap();
        let r = topk_attack(&SimpleGradient::new(model), &img, &AttackConfig::new(2, 0.3, NormOrder::TWO)).unwrap();
        assert_eq!(r.x_adv, img);
        assert_eq!(r.achieved_overlap, 1.0);
        assert_eq!(r.objective_trace.len(), DEFAULT_ITERATIONS + 1);
    }

    #[test]
    fn budget_and_argmax_contracts() {
        for norm in [NormOrder::ONE, NormOrder::TWO, NormOrder::new(3.0).unwrap(), NormOrder::INFINITY] {
            let (interp, img) = mlp_case(2);
            let cfg = AttackConfig::new(3, 0.1, norm).with_iterations(40).with_lr(0.05);
            let r = topk_attack(&interp, &img, &cfg).unwrap();
            assert!(r.distance_trace.iter().all(|&d| d <= 0.1 + 1e-9), "{norm}");
            let max = r.objective_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(max, r.objective_trace[r.best_iteration]);
            let d_adv = objective(&interp, r.x_adv.pixels(), 0, &r.clean_top_k).unwrap();
            assert_eq!(d_adv, max);
        }
    }

    #[test]
    fn sign_steps_move_every_coordinate_by_lr() {
        let (interp, img) = mlp_case(3);
        let cfg = AttackConfig::new(3, 10.0, NormOrder::INFINITY).with_iterations(1).with_lr(1e-3);
        let r = topk_attack(&interp, &img, &cfg).unwrap();
        // a tiny step along the gradient always improves D
        assert_eq!(r.best_iteration, 1);
        for (a, b) in r.x_adv.pixels().iter().zip(img.pixels()) {
            assert!(((a - b).abs() - 1e-3).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_mode_agrees() {
        let (interp, img) = mlp_case(4);
        let mut cfg = AttackConfig::new(3, 0.05, NormOrder::INFINITY).with_iterations(5).with_lr(0.01);
        let a = topk_attack(&interp, &img, &cfg).unwrap();
        cfg.gradient = GradientMode::FiniteDifference { step: 1e-4 };
        let b = topk_attack_black_box(&interp, &img, &cfg).unwrap();
        assert_eq!(a.x_adv, b.x_adv);
        cfg.gradient = GradientMode::Analytic;
        assert!(matches!(topk_attack_black_box(&interp, &img, &cfg), Err(Error::Unsupported(_))));
    }

    #[test]
    fn deterministic() {
        let (interp, img) = mlp_case(5);
        let cfg = AttackConfig::new(4, 0.08, NormOrder::TWO).with_iterations(30).with_lr(0.02);
        assert_eq!(topk_attack(&interp, &img, &cfg).unwrap(), topk_attack(&interp, &img, &cfg).unwrap());
    }
}
