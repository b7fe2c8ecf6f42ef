//! Tiny differentiable classifiers with hand-written backpropagation.
//!
//! Forward and backward passes are generic over [`Real`], so running the
//! input gradient on [`Dual`] inputs `x + e w` yields `(grad, H w)` in one
//! pass (forward-over-reverse).

use std::ops::{Add, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Dims;

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn cst(v: f64) -> Self;
    fn primal(self) -> f64;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln_1p(self) -> Self;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn primal(self) -> f64 {
        self
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
}

/// `v + d e` with `e^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Dual { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(self.v / o.v, (self.d * o.v - self.v * o.d) / (o.v * o.v))
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl Real for Dual {
    fn cst(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn primal(self) -> f64 {
        self.v
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        Dual::new(t, self.d * (1.0 - t * t))
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual::new(e, self.d * e)
    }
    fn ln_1p(self) -> Self {
        Dual::new(self.v.ln_1p(), self.d / (1.0 + self.v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    /// `(f(z), f'(z))`.
    fn eval<T: Real>(self, z: T) -> (T, T) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                (t, T::cst(1.0) - t * t)
            }
            Activation::Softplus => {
                // stable for both signs: softplus(z) = max(z,0) + ln(1 + e^-|z|)
                if z.primal() > 0.0 {
                    let e = (-z).exp();
                    (z + e.ln_1p(), T::cst(1.0) / (T::cst(1.0) + e))
                } else {
                    let e = z.exp();
                    (e.ln_1p(), e / (T::cst(1.0) + e))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// `s = W x + b`.
    Linear,
    /// `s_c = x^T A_c x + b_c`.
    Quadratic,
    /// Fully connected hidden layers, then a linear readout.
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
    },
    /// One valid convolution (stride 1), activation, linear readout.
    Conv {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
}

/// A small classifier over flattened images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyModel {
    pub architecture: Architecture,
    pub dims: Dims,
    pub n_classes: usize,
    weights: Vec<f64>,
}

fn dot<T: Real>(w: &[f64], x: &[T]) -> T {
    w.iter().zip(x).fold(T::cst(0.0), |acc, (&w, &x)| acc + T::cst(w) * x)
}

impl TinyModel {
    pub fn from_parts(architecture: Architecture, dims: Dims, n_classes: usize, weights: Vec<f64>) -> Result<Self> {
        if n_classes == 0 || dims.is_empty() {
            return Err(Error::param("model needs at least one class and one input"));
        }
        if let Architecture::Conv { kernel, filters, .. } = architecture {
            if kernel == 0 || filters == 0 || kernel > dims.height || kernel > dims.width {
                return Err(Error::param(format!("kernel {kernel} does not fit {dims}")));
            }
        }
        if let Architecture::Mlp { hidden, .. } = &architecture {
            if hidden.contains(&0) {
                return Err(Error::param("hidden layers must be nonempty"));
            }
        }
        let expected = param_count(&architecture, dims, n_classes);
        if weights.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("model weights must be finite"));
        }
        Ok(TinyModel {
            architecture,
            dims,
            n_classes,
            weights,
        })
    }

    /// Gaussian weights scaled by `1 / sqrt(fan_in)`, zero biases.
    pub fn random(architecture: Architecture, dims: Dims, n_classes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Vec::new();
        let layer = |w: &mut Vec<f64>, rows: usize, fan_in: usize, rng: &mut ChaCha8Rng| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..rows * fan_in {
                let z: f64 = rng.sample(StandardNormal);
                w.push(scale * z);
            }
            w.extend(std::iter::repeat_n(0.0, rows));
        };
        let n = dims.len();
        match &architecture {
            Architecture::Linear => layer(&mut w, n_classes, n, &mut rng),
            Architecture::Quadratic => {
                let scale = 1.0 / n as f64;
                for _ in 0..n_classes * n * n {
                    let z: f64 = rng.sample(StandardNormal);
                    w.push(scale * z);
                }
                w.extend(std::iter::repeat_n(0.0, n_classes));
            }
            Architecture::Mlp { hidden, .. } => {
                let mut fan_in = n;
                for &h in hidden {
                    layer(&mut w, h, fan_in, &mut rng);
                    fan_in = h;
                }
                layer(&mut w, n_classes, fan_in, &mut rng);
            }
            Architecture::Conv { filters, kernel, .. } => {
                layer(&mut w, *filters, kernel * kernel * dims.channels, &mut rng);
                let oh = (dims.height + 1).saturating_sub(*kernel);
                let ow = (dims.width + 1).saturating_sub(*kernel);
                layer(&mut w, n_classes, oh * ow * filters, &mut rng);
            }
        }
        TinyModel::from_parts(architecture, dims, n_classes, w)
    }

    pub fn linear(dims: Dims, weights: &[Vec<f64>], bias: &[f64]) -> Result<Self> {
        let mut w: Vec<f64> = weights.iter().flatten().copied().collect();
        w.extend_from_slice(bias);
        TinyModel::from_parts(Architecture::Linear, dims, weights.len(), w)
    }

    /// `s_c = x^T A_c x`; each matrix is row-major `n x n`.
    pub fn quadratic(dims: Dims, matrices: &[Vec<f64>]) -> Result<Self> {
        let mut w: Vec<f64> = matrices.iter().flatten().copied().collect();
        w.extend(std::iter::repeat_n(0.0, matrices.len()));
        TinyModel::from_parts(Architecture::Quadratic, dims, matrices.len(), w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_inputs(&self) -> usize {
        self.dims.len()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n_inputs() {
            return Err(Error::DimMismatch {
                expected: self.n_inputs(),
                found: len,
            });
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.n_classes {
            return Err(Error::domain(format!(
                "label {label} out of range for {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// Class scores.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(self.forward_generic(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let s = self.forward(x)?;
        Ok(s
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v > s[b] { i } else { b }))
    }

    /// `d s_label / d x`.
    pub fn input_gradient(&self, x: &[f64], label: usize) -> Result<Vec<f64>> {
        self.check(x.len())?;
        self.check_label(label)?;
        Ok(self.gradient_generic(x, label))
    }

    /// `(d s_label / d x, H w)` where `H` is the Hessian of `s_label`.
    pub fn gradient_and_hvp(&self, x: &[f64], label: usize, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(x.len())?;
        self.check(w.len())?;
        self.check_label(label)?;
        let xd: Vec<Dual> = x.iter().zip(w).map(|(&v, &d)| Dual::new(v, d)).collect();
        let g = self.gradient_generic(&xd, label);
        Ok((g.iter().map(|d| d.v).collect(), g.iter().map(|d| d.d).collect()))
    }

    fn forward_generic<T: Real>(&self, x: &[T]) -> Vec<T> {
        let n = x.len();
        let w = &self.weights;
        let c = self.n_classes;
        match &self.architecture {
            Architecture::Linear => (0..c)
                .map(|k| dot(&w[k * n..(k + 1) * n], x) + T::cst(w[c * n + k]))
                .collect(),
            Architecture::Quadratic => (0..c)
                .map(|k| {
                    let a = &w[k * n * n..(k + 1) * n * n];
                    let mut s = T::cst(w[c * n * n + k]);
                    for i in 0..n {
                        s = s + x[i] * dot(&a[i * n..(i + 1) * n], x);
                    }
                    s
                })
                .collect(),
            Architecture::Mlp { .. } => self.mlp_pass(x).0,
            Architecture::Conv { .. } => self.conv_pass(x).0,
        }
    }

    fn gradient_generic<T: Real>(&self, x: &[T], label: usize) -> Vec<T> {
        let n = x.len();
        let w = &self.weights;
        match &self.architecture {
            Architecture::Linear => w[label * n..(label + 1) * n].iter().map(|&v| T::cst(v)).collect(),
            Architecture::Quadratic => {
                let a = &w[label * n * n..(label + 1) * n * n];
                (0..n)
                    .map(|i| {
                        let mut g = T::cst(0.0);
                        for j in 0..n {
                            g = g + T::cst(a[i * n + j] + a[j * n + i]) * x[j];
                        }
                        g
                    })
                    .collect()
            }
            Architecture::Mlp { .. } => {
                let (_, cache) = self.mlp_pass(x);
                self.mlp_backward(label, &cache)
            }
            Architecture::Conv { .. } => {
                let (_, cache) = self.conv_pass(x);
                self.conv_backward(x.len(), label, &cache)
            }
        }
    }

    /// Returns scores and per-layer `(offset, fan_in, h_prev, f'(z))`.
    fn mlp_pass<T: Real>(&self, x: &[T]) -> (Vec<T>, Vec<(usize, usize, Vec<T>)>) {
        let Architecture::Mlp { hidden, activation } = &self.architecture else {
            unreachable!()
        };
        let w = &self.weights;
        let mut h: Vec<T> = x.to_vec();
        let mut offset = 0;
        let mut cache = Vec::with_capacity(hidden.len());
        for &rows in hidden {
            let fan_in = h.len();
            let bias = offset + rows * fan_in;
            let mut next = Vec::with_capacity(rows);
            let mut deriv = Vec::with_capacity(rows);
            for r in 0..rows {
                let z = dot(&w[offset + r * fan_in..offset + (r + 1) * fan_in], &h) + T::cst(w[bias + r]);
                let (a, da) = activation.eval(z);
                next.push(a);
                deriv.push(da);
            }
            cache.push((offset, fan_in, deriv));
            offset = bias + rows;
            h = next;
        }
        let fan_in = h.len();
        let c = self.n_classes;
        let scores = (0..c)
            .map(|k| dot(&w[offset + k * fan_in..offset + (k + 1) * fan_in], &h) + T::cst(w[offset + c * fan_in + k]))
            .collect();
        cache.push((offset, fan_in, Vec::new()));
        (scores, cache)
    }

    fn mlp_backward<T: Real>(&self, label: usize, cache: &[(usize, usize, Vec<T>)]) -> Vec<T> {
        let w = &self.weights;
        let (out_off, out_fan, _) = &cache[cache.len() - 1];
        let mut delta: Vec<T> = w[out_off + label * out_fan..out_off + (label + 1) * out_fan]
            .iter()
            .map(|&v| T::cst(v))
            .collect();
        for (offset, fan_in, deriv) in cache[..cache.len() - 1].iter().rev() {
            let dz: Vec<T> = delta.iter().zip(deriv).map(|(&d, &f)| d * f).collect();
            let mut prev = vec![T::cst(0.0); *fan_in];
            for (r, &g) in dz.iter().enumerate() {
                let row = &w[offset + r * fan_in..offset + (r + 1) * fan_in];
                for (p, &wv) in prev.iter_mut().zip(row) {
                    *p = *p + T::cst(wv) * g;
                }
            }
            delta = prev;
        }
        delta
    }

    fn conv_shape(&self) -> (usize, usize, usize, usize, Activation) {
        let Architecture::Conv {
            filters,
            kernel,
            activation,
        } = self.architecture
        else {
            unreachable!()
        };
        let oh = self.dims.height + 1 - kernel;
        let ow = self.dims.width + 1 - kernel;
        (filters, kernel, oh, ow, activation)
    }

    /// Returns scores and `f'(z)` over the `(row, col, filter)` feature map.
    fn conv_pass<T: Real>(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let (filters, kernel, oh, ow, act) = self.conv_shape();
        let d = self.dims;
        let ch = d.channels;
        let w = &self.weights;
        let ksize = kernel * kernel * ch;
        let bias_off = filters * ksize;
        let mut feat = Vec::with_capacity(oh * ow * filters);
        let mut deriv = Vec::with_capacity(oh * ow * filters);
        for r in 0..oh {
            for c in 0..ow {
                for f in 0..filters {
                    let kern = &w[f * ksize..(f + 1) * ksize];
                    let mut z = T::cst(w[bias_off + f]);
                    for i in 0..kernel {
                        for j in 0..kernel {
                            for k in 0..ch {
                                let kv = kern[(i * kernel + j) * ch + k];
                                z = z + T::cst(kv) * x[d.index(r + i, c + j, k)];
                            }
                        }
                    }
                    let (a, da) = act.eval(z);
                    feat.push(a);
                    deriv.push(da);
                }
            }
        }
        let read_off = bias_off + filters;
        let m = feat.len();
        let nc = self.n_classes;
        let scores = (0..nc)
            .map(|k| dot(&w[read_off + k * m..read_off + (k + 1) * m], &feat) + T::cst(w[read_off + nc * m + k]))
            .collect();
        (scores, deriv)
    }

    fn conv_backward<T: Real>(&self, n: usize, label: usize, deriv: &[T]) -> Vec<T> {
        let (filters, kernel, oh, ow, _) = self.conv_shape();
        let d = self.dims;
        let ch = d.channels;
        let w = &self.weights;
        let ksize = kernel * kernel * ch;
        let read_off = filters * ksize + filters;
        let m = deriv.len();
        let readout = &w[read_off + label * m..read_off + (label + 1) * m];
        let mut grad = vec![T::cst(0.0); n];
        for r in 0..oh {
            for c in 0..ow {
                for f in 0..filters {
                    let idx = (r * ow + c) * filters + f;
                    let dz = T::cst(readout[idx]) * deriv[idx];
                    let kern = &w[f * ksize..(f + 1) * ksize];
                    for i in 0..kernel {
                        for j in 0..kernel {
                            for k in 0..ch {
                                let p = d.index(r + i, c + j, k);
                                grad[p] = grad[p] + T::cst(kern[(i * kernel + j) * ch + k]) * dz;
                            }
                        }
                    }
                }
            }
        }
        grad
    }
}

/// Number of parameters for an architecture.
pub fn param_count(arch: &Architecture, dims: Dims, n_classes: usize) -> usize {
    let n = dims.len();
    match arch {
        Architecture::Linear => n_classes * (n + 1),
        Architecture::Quadratic => n_classes * (n * n + 1),
        Architecture::Mlp { hidden, .. } => {
            let mut fan_in = n;
            let mut total = 0;
            for &h in hidden {
                total += h * (fan_in + 1);
                fan_in = h;
            }
            total + n_classes * (fan_in + 1)
        }
        Architecture::Conv { filters, kernel, .. } => {
            let oh = (dims.height + 1).saturating_sub(*kernel);
            let ow = (dims.width + 1).saturating_sub(*kernel);
            filters * (kernel * kernel * dims.channels + 1) + n_classes * (oh * ow * filters + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn archs() -> Vec<(Architecture, Dims)> {
        vec![
            (Architecture::Linear, Dims::new(3, 3, 1)),
            (Architecture::Quadratic, Dims::flat(5)),
            (
                Architecture::Mlp {
                    hidden: vec![6, 5],
                    activation: Activation::Tanh,
                },
                Dims::new(3, 3, 1),
            ),
            (
                Architecture::Mlp {
                    hidden: vec![7],
                    activation: Activation::Softplus,
                },
                Dims::new(2, 3, 2),
            ),
            (
                Architecture::Conv {
                    filters: 3,
                    kernel: 2,
                    activation: Activation::Tanh,
                },
                Dims::new(4, 4, 2),
            ),
        ]
    }

    fn input(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn linear_forward_and_gradient() {
        let m = TinyModel::linear(Dims::flat(3), &[vec![1.0, -2.0, 0.5], vec![0.0, 1.0, 1.0]], &[0.1, -0.2]).unwrap();
        let s = m.forward(&[1.0, 0.5, 0.2]).unwrap();
        assert!((s[0] - (1.0 - 1.0 + 0.1 + 0.1)).abs() < 1e-15);
        assert!((s[1] - (0.5 + 0.2 - 0.2)).abs() < 1e-15);
        assert_eq!(m.input_gradient(&[0.3, 0.9, 0.1], 0).unwrap(), vec![1.0, -2.0, 0.5]);
        let zero = TinyModel::linear(Dims::flat(2), &[vec![0.0; 2]], &[0.0]).unwrap();
        assert_eq!(zero.forward(&[0.4, 0.7]).unwrap(), vec![0.0]);
    }

    #[test]
    fn quadratic_gradient_is_two_a_x() {
        let a = vec![2.0, 1.0, 1.0, 3.0];
        let m = TinyModel::quadratic(Dims::flat(2), &[a]).unwrap();
        let x = [0.5, -1.0];
        assert_eq!(m.forward(&x).unwrap()[0], 0.5 - 1.0 + 3.0);
        assert_eq!(m.input_gradient(&x, 0).unwrap(), vec![2.0 * (1.0 - 1.0), 2.0 * (0.5 - 3.0)]);
        let (_, hv) = m.gradient_and_hvp(&x, 0, &[1.0, 0.0]).unwrap();
        assert_eq!(hv, vec![4.0, 2.0]);
    }

    #[test]
    fn gradients_match_central_differences() {
        for (arch, dims) in archs() {
            for seed in 0..20 {
                let m = TinyModel::random(arch.clone(), dims, 3, seed).unwrap();
                let x = input(dims.len(), seed + 100);
                let g = m.input_gradient(&x, 1).unwrap();
                let h = 1e-5;
                for i in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (m.forward(&xp).unwrap()[1] - m.forward(&xm).unwrap()[1]) / (2.0 * h);
                    assert!((g[i] - fd).abs() < 1e-6, "{arch:?} seed {seed} coord {i}: {} vs {fd}", g[i]);
                }
            }
        }
    }

    #[test]
    fn hvp_matches_gradient_differences() {
        for (arch, dims) in archs() {
            let m = TinyModel::random(arch.clone(), dims, 2, 7).unwrap();
            let x = input(dims.len(), 1);
            let w = input(dims.len(), 2);
            let (g, hv) = m.gradient_and_hvp(&x, 0, &w).unwrap();
            assert_eq!(g, m.input_gradient(&x, 0).unwrap());
            let h = 1e-5;
            let xp: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a - h * b).collect();
            let gp = m.input_gradient(&xp, 0).unwrap();
            let gm = m.input_gradient(&xm, 0).unwrap();
            for i in 0..x.len() {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!((hv[i] - fd).abs() < 1e-6, "{arch:?} {i}");
            }
        }
    }

    #[test]
    fn softplus_finite_on_unit_cube() {
        let arch = Architecture::Mlp {
            hidden: vec![8],
            activation: Activation::Softplus,
        };
        let m = TinyModel::random(arch, Dims::flat(6), 4, 3).unwrap();
        for s in 0..50 {
            assert!(m.forward(&input(6, s)).unwrap().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = TinyModel::random(Architecture::Linear, Dims::flat(3), 2, 0).unwrap();
        assert!(matches!(m.forward(&[0.0; 4]), Err(Error::DimMismatch { .. })));
        assert!(m.input_gradient(&[0.0; 3], 2).is_err());
        assert!(TinyModel::from_parts(Architecture::Linear, Dims::flat(3), 2, vec![0.0; 7]).is_err());
        let conv = Architecture::Conv {
            filters: 1,
            kernel: 5,
            activation: Activation::Tanh,
        };
        assert!(TinyModel::random(conv, Dims::new(3, 3, 1), 2, 0).is_err());
    }
}
