//! Attack the top-k attributions of a network, then check how much of the
//! smoothed top-k survives the same perturbation.

use renyi_smooth::attack::{topk_attack, AttackConfig};
use renyi_smooth::eval::{synthetic_task, TaskShape};
use renyi_smooth::interpret::SimpleGradient;
use renyi_smooth::order::NormOrder;
use renyi_smooth::scoring::top_k_overlap;
use renyi_smooth::smoother::{smooth, SmoothingConfig};

fn main() -> renyi_smooth::Result<()> {
    let task = synthetic_task(&TaskShape::default(), 11)?;
    let n = task.image.len();
    let k = n / 4;
    let interp = SimpleGradient::new(task.model.clone());

    for budget in [0.02, 0.05, 0.1] {
        let result = topk_attack(&interp, &task.image, &AttackConfig::new(k, budget, NormOrder::INFINITY))?;
        let cfg = SmoothingConfig::new(n, 100, 0.2, NormOrder::INFINITY, 5)?.with_scoring(k as f64, 0.25);
        let clean = smooth(&interp, &task.image, &cfg)?;
        let adv = smooth(&interp, &result.x_adv, &cfg)?;
        println!(
            "L_inf={budget:<5} best step {:>3}/{:<3} raw overlap {:.3}  smoothed overlap {:.3}",
            result.best_iteration,
            result.iterations_run,
            result.achieved_overlap,
            top_k_overlap(clean.scores(), adv.scores(), k)?
        );
    }
    Ok(())
}
