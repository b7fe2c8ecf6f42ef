//! Base interpreters: maps from an input (and its label) to per-pixel
//! attributions.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Dims;
use crate::model::TinyModel;
use crate::rrsm::read_map;
use crate::scoring::RawMap;

/// Something that can be evaluated at arbitrary (noisy) inputs.
pub trait Interpreter: Sync {
    fn dims(&self) -> Dims;

    fn interpret(&self, x: &[f64], label: usize) -> Result<RawMap>;
}

/// An interpreter whose attributions can be differentiated w.r.t. the input.
pub trait DifferentiableInterpreter: Interpreter {
    /// `d/dx sum_i u_i g(x)_i`.
    fn attribution_vjp(&self, x: &[f64], label: usize, u: &[f64]) -> Result<Vec<f64>>;

    /// Predicted class, when the interpreter wraps a classifier.
    fn predict(&self, _x: &[f64]) -> Option<usize> {
        None
    }
}

/// Input gradient of the labelled class score.
#[derive(Debug, Clone)]
pub struct SimpleGradient {
    pub model: TinyModel,
    /// Keep raw gradients instead of their magnitudes.
    pub signed: bool,
}

impl SimpleGradient {
    pub fn new(model: TinyModel) -> Self {
        SimpleGradient { model, signed: false }
    }

    pub fn signed(model: TinyModel) -> Self {
        SimpleGradient { model, signed: true }
    }
}

impl Interpreter for SimpleGradient {
    fn dims(&self) -> Dims {
        self.model.dims
    }

    fn interpret(&self, x: &[f64], label: usize) -> Result<RawMap> {
        let mut g = self.model.input_gradient(x, label)?;
        if !self.signed {
            g.iter_mut().for_each(|v| *v = v.abs());
        }
        RawMap::new(g)
    }
}

impl DifferentiableInterpreter for SimpleGradient {
    fn attribution_vjp(&self, x: &[f64], label: usize, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != x.len() {
            return Err(Error::DimMismatch {
                expected: x.len(),
                found: u.len(),
            });
        }
        // the Hessian is symmetric, so the vjp is H (u * d|s|/ds)
        let w: Vec<f64> = if self.signed {
            u.to_vec()
        } else {
            let g = self.model.input_gradient(x, label)?;
            g.iter().zip(u).map(|(&s, &ui)| if s == 0.0 { 0.0 } else { ui * s.signum() }).collect()
        };
        Ok(self.model.gradient_and_hvp(x, label, &w)?.1)
    }

    fn predict(&self, x: &[f64]) -> Option<usize> {
        self.model.predict(x).ok()
    }
}

/// Returns the same map for every input.
#[derive(Debug, Clone)]
pub struct ConstantInterpreter {
    pub map: RawMap,
    pub dims: Dims,
}

impl ConstantInterpreter {
    pub fn new(map: RawMap, dims: Dims) -> Result<Self> {
        if map.len() != dims.len() {
            return Err(Error::DimMismatch {
                expected: dims.len(),
                found: map.len(),
            });
        }
        Ok(ConstantInterpreter { map, dims })
    }
}

impl Interpreter for ConstantInterpreter {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn interpret(&self, x: &[f64], _label: usize) -> Result<RawMap> {
        if x.len() != self.dims.len() {
            return Err(Error::DimMismatch {
                expected: self.dims.len(),
                found: x.len(),
            });
        }
        Ok(self.map.clone())
    }
}

impl DifferentiableInterpreter for ConstantInterpreter {
    fn attribution_vjp(&self, x: &[f64], _label: usize, _u: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; x.len()])
    }
}

/// Central differences of `sum_i u_i g(x)_i` around any interpreter.
#[derive(Debug, Clone)]
pub struct FiniteDifference<I> {
    pub inner: I,
    pub step: f64,
}

impl<I: Interpreter> FiniteDifference<I> {
    /// Step `1e-4 * range`, where `range` is the input's dynamic range.
    pub fn new(inner: I, range: f64) -> Self {
        FiniteDifference {
            inner,
            step: 1e-4 * range,
        }
    }
}

impl<I: Interpreter> Interpreter for FiniteDifference<I> {
    fn dims(&self) -> Dims {
        self.inner.dims()
    }

    fn interpret(&self, x: &[f64], label: usize) -> Result<RawMap> {
        self.inner.interpret(x, label)
    }
}

impl<I: Interpreter> DifferentiableInterpreter for FiniteDifference<I> {
    fn attribution_vjp(&self, x: &[f64], label: usize, u: &[f64]) -> Result<Vec<f64>> {
        let h = self.step;
        let mut z = x.to_vec();
        let mut out = Vec::with_capacity(x.len());
        let weighted = |m: RawMap| m.scores().iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..x.len() {
            z[i] = x[i] + h;
            let up = weighted(self.inner.interpret(&z, label)?);
            z[i] = x[i] - h;
            let down = weighted(self.inner.interpret(&z, label)?);
            z[i] = x[i];
            out.push((up - down) / (2.0 * h));
        }
        Ok(out)
    }
}

/// Precomputed saliency maps stored as `<dir>/<image_id>.rrsm`.
///
/// These cannot be re-evaluated at noisy inputs, so they do not implement
/// [`Interpreter`]; they feed certification and metrics only.
#[derive(Debug, Clone)]
pub struct SaliencyDirectory {
    dir: PathBuf,
}

impl SaliencyDirectory {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SaliencyDirectory { dir: dir.into() }
    }

    pub fn path_for(&self, image_id: &str) -> PathBuf {
        self.dir.join(format!("{image_id}.rrsm"))
    }

    pub fn load(&self, image_id: &str) -> Result<(Dims, RawMap)> {
        load_saliency(&self.dir, image_id)
    }

    /// Loads and checks the map shape.
    pub fn load_with_dims(&self, image_id: &str, dims: Dims) -> Result<RawMap> {
        let map = read_map(&self.path_for(image_id))?;
        map.expect_dims(dims)?;
        RawMap::new(map.to_f64())
    }
}

pub fn load_saliency(dir: &Path, image_id: &str) -> Result<(Dims, RawMap)> {
    let map = read_map(&dir.join(format!("{image_id}.rrsm")))?;
    Ok((map.dims, RawMap::new(map.to_f64())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::FormatError;
    use crate::model::{Activation, Architecture};
    use crate::rrsm::{write_map, RrsmMap};

    #[test]
    fn linear_attribution_is_abs_row() {
        let m = TinyModel::linear(Dims::flat(3), &[vec![1.0, -2.0, 0.5], vec![0.0, 1.0, 1.0]], &[0.0, 0.0]).unwrap();
        let g = SimpleGradient::new(m.clone());
        for x in [[0.1, 0.2, 0.3], [0.9, 0.0, 0.5]] {
            assert_eq!(g.interpret(&x, 0).unwrap().scores(), &[1.0, 2.0, 0.5]);
        }
        assert_eq!(SimpleGradient::signed(m).interpret(&[0.0; 3], 0).unwrap().scores(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn analytic_vjp_matches_finite_difference() {
        let arch = Architecture::Mlp {
            hidden: vec![6],
            activation: Activation::Tanh,
        };
        let model = TinyModel::random(arch, Dims::flat(5), 2, 4).unwrap();
        let x = [0.2, 0.7, 0.4, 0.9, 0.1];
        let u = [1.0, 0.0, -1.0, 0.5, 0.0];
        for signed in [false, true] {
            let analytic = SimpleGradient { model: model.clone(), signed };
            let fd = FiniteDifference::new(analytic.clone(), 1.0);
            let a = analytic.attribution_vjp(&x, 1, &u).unwrap();
            let b = fd.attribution_vjp(&x, 1, &u).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-6, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn saliency_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dims = Dims::new(2, 2, 1);
        let map = RrsmMap::new(dims, vec![0.5, -1.25, 3.0, 0.0]).unwrap();
        write_map(&dir.path().join("img7.rrsm"), &map).unwrap();
        let src = SaliencyDirectory::new(dir.path());
        let (d, raw) = src.load("img7").unwrap();
        assert_eq!(d, dims);
        assert_eq!(raw.scores(), &[0.5, -1.25, 3.0, 0.0]);
        let err = src.load_with_dims("img7", Dims::new(4, 1, 1)).unwrap_err();
        assert!(matches!(err, Error::Format(FormatError::DimsMismatch { .. })));
        assert!(matches!(src.load("nope"), Err(Error::Format(FormatError::Missing(_)))));
    }
}
