//! Pointing-game scores of raw and smoothed maps against the object mask.

use renyi_smooth::eval::{pointing_score, synthetic_task, TaskShape, DEFAULT_TAU};
use renyi_smooth::interpret::{Interpreter, SimpleGradient};
use renyi_smooth::order::NormOrder;
use renyi_smooth::smoother::{smooth, SmoothingConfig};

fn main() -> renyi_smooth::Result<()> {
    let (mut raw_hits, mut smooth_hits) = (0.0, 0.0);
    let seeds = 20;
    for seed in 0..seeds {
        let task = synthetic_task(&TaskShape::default(), seed)?;
        let n = task.image.len();
        let k = n / 4;
        let interp = SimpleGradient::new(task.model.clone());
        let raw = interp.interpret(task.image.pixels(), task.image.label)?;
        let cfg = SmoothingConfig::new(n, 50, 0.1, NormOrder::INFINITY, seed)?.with_scoring(k as f64, 0.25);
        let smoothed = smooth(&interp, &task.image, &cfg)?;
        let r = pointing_score(raw.scores(), &task.mask, k, DEFAULT_TAU)?;
        let s = pointing_score(smoothed.scores(), &task.mask, k, DEFAULT_TAU)?;
        raw_hits += r.soft;
        smooth_hits += s.soft;
        if seed < 5 {
            println!("seed {seed}: raw hard={:+} soft={:.2}  smoothed hard={:+} soft={:.2}", r.hard, r.soft, s.hard, s.soft);
        }
    }
    println!("mean soft score over {seeds} tasks: raw {:.3}, smoothed {:.3}", raw_hits / seeds as f64, smooth_hits / seeds as f64);
    Ok(())
}
