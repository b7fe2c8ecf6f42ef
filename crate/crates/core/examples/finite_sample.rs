//! How many samples a certificate needs: the lower confidence bound on the
//! robustness level of the expected map, for growing T.

use renyi_smooth::certify::TopKSpec;
use renyi_smooth::concentration::finite_sample_certificate;
use renyi_smooth::eval::{synthetic_task, TaskShape};
use renyi_smooth::interpret::SimpleGradient;
use renyi_smooth::order::{NormOrder, RenyiOrder};
use renyi_smooth::scoring::build_scoring_vector;
use renyi_smooth::smoother::{smooth, SmoothingConfig};

fn main() -> renyi_smooth::Result<()> {
    let task = synthetic_task(&TaskShape::default(), 1)?;
    let n = task.image.len();
    let interp = SimpleGradient::new(task.model.clone());
    let spec = TopKSpec::new(n / 4, 0.75, n)?;
    let v_max = build_scoring_vector(n, n as f64 / 4.0, 0.25)?.max_weight();

    println!("{:>7} {:>10} {:>10} {:>10}", "T", "eps_hat", "delta", "eps_lower");
    for t in [50, 500, 5000, 50000] {
        let cfg = SmoothingConfig::new(n, t, 0.1, NormOrder::INFINITY, 9)?.with_scoring(n as f64 / 4.0, 0.25);
        let m_hat = smooth(&interp, &task.image, &cfg)?;
        let b = finite_sample_certificate(m_hat.scores(), spec, RenyiOrder::Finite(2.0), t, 0.95, v_max)?;
        println!("{t:>7} {:>10.5} {:>10.5} {:>10.5}", b.eps_hat, b.delta_coord, b.eps_lower);
    }
    Ok(())
}
