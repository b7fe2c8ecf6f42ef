//! Smooth the gradient map of a small network on a synthetic image and
//! compare its top pixels with the raw map.

use renyi_smooth::eval::{synthetic_task, TaskShape};
use renyi_smooth::interpret::{Interpreter, SimpleGradient};
use renyi_smooth::order::NormOrder;
use renyi_smooth::scoring::{top_k_overlap, top_k_set};
use renyi_smooth::smoother::{smooth, SmoothingConfig};

fn main() -> renyi_smooth::Result<()> {
    let task = synthetic_task(&TaskShape::default(), 3)?;
    let n = task.image.len();
    let interp = SimpleGradient::new(task.model.clone());
    let raw = interp.interpret(task.image.pixels(), task.image.label)?;

    let cfg = SmoothingConfig::new(n, 200, 0.1, NormOrder::INFINITY, 42)?.with_scoring(n as f64 / 4.0, 0.25);
    let smoothed = smooth(&interp, &task.image, &cfg)?;
    println!("noise shape b={} sigma={} over T={}", cfg.d_star, cfg.sigma, smoothed.samples);

    let k = n / 4;
    let top = top_k_set(smoothed.scores(), k)?;
    let in_mask = top.iter().filter(|&&i| task.mask[i]).count();
    println!("smoothed top-{k}: {in_mask} of {k} inside the object");
    println!("overlap with raw map: {:.3}", top_k_overlap(raw.scores(), smoothed.scores(), k)?);

    for row in 0..task.image.dims().height {
        let w = task.image.dims().width;
        let line: String = (0..w)
            .map(|c| if top.contains(&(row * w + c)) { '#' } else if task.mask[row * w + c] { '+' } else { '.' })
            .collect();
        println!("  {line}");
    }
    Ok(())
}
