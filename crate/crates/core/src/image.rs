//! Images and their shapes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(height, width, channels)`; pixels are stored row-major with channels
/// interleaved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Dims {
            height,
            width,
            channels,
        }
    }

    /// Flat `1 x n x 1` shape.
    pub fn flat(n: usize) -> Self {
        Dims::new(1, n, 1)
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    pub fn tuple(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// An input image with intensities in `[0, 1]` and its class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pixels: Vec<f64>,
    dims: Dims,
    pub label: usize,
}

impl Image {
    pub fn new(pixels: Vec<f64>, dims: Dims, label: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::domain("image has a zero dimension"));
        }
        if pixels.len() != dims.len() {
            return Err(Error::DimMismatch {
                expected: dims.len(),
                found: pixels.len(),
            });
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::domain(format!("pixel intensity {p} outside [0, 1]")));
        }
        Ok(Image { pixels, dims, label })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Same dims and label, different pixels. Pixels are clamped to `[0, 1]`.
    pub fn with_pixels(&self, pixels: &[f64]) -> Result<Self> {
        let clamped = pixels.iter().map(|p| p.clamp(0.0, 1.0)).collect();
        Image::new(clamped, self.dims, self.label)
    }
}
