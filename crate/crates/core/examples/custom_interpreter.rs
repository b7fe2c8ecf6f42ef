//! Plugging in your own attribution method. Anything implementing
//! `Interpreter` can be smoothed and certified; the black-box attack only
//! needs the same trait.

use renyi_smooth::attack::{topk_attack_black_box, AttackConfig, GradientMode};
use renyi_smooth::certify::{certify_max_attack, TopKSpec};
use renyi_smooth::image::{Dims, Image};
use renyi_smooth::interpret::Interpreter;
use renyi_smooth::order::NormOrder;
use renyi_smooth::scoring::RawMap;
use renyi_smooth::smoother::{smooth, SmoothingConfig};

/// Local contrast: how far each pixel is from the mean of its row.
struct RowContrast {
    dims: Dims,
}

impl Interpreter for RowContrast {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn interpret(&self, x: &[f64], _label: usize) -> renyi_smooth::Result<RawMap> {
        let w = self.dims.width;
        let mut out = vec![0.0; x.len()];
        for (row, chunk) in x.chunks(w).enumerate() {
            let mean = chunk.iter().sum::<f64>() / w as f64;
            for (c, v) in chunk.iter().enumerate() {
                out[row * w + c] = (v - mean).powi(2);
            }
        }
        RawMap::new(out)
    }
}

fn main() -> renyi_smooth::Result<()> {
    let dims = Dims::new(6, 6, 1);
    let pixels: Vec<f64> = (0..36).map(|i| ((i * 7 % 11) as f64) / 10.0).collect();
    let image = Image::new(pixels, dims, 0)?;
    let interp = RowContrast { dims };

    let cfg = SmoothingConfig::new(36, 300, 0.05, NormOrder::TWO, 1)?.with_scoring(9.0, 0.25);
    let m = smooth(&interp, &image, &cfg)?;
    let cert = certify_max_attack(m.scores(), TopKSpec::new(9, 0.67, 36)?, 0.05, NormOrder::TWO)?;
    println!("certified L2 radius for 67% top-9 overlap: {:.5}", cert.l);

    let mut attack = AttackConfig::new(9, 0.1, NormOrder::TWO).with_iterations(40).with_lr(0.02);
    attack.gradient = GradientMode::FiniteDifference { step: 1e-4 };
    let r = topk_attack_black_box(&interp, &image, &attack)?;
    println!("black-box attack at L2=0.1: raw top-9 overlap {:.3}", r.achieved_overlap);
    Ok(())
}
