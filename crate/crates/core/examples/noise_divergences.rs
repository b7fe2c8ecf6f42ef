//! Renyi divergence between a generalized normal and its shifted copy:
//! closed forms next to adaptive quadrature, and the inversion back to a
//! shift for a divergence budget.

use renyi_smooth::gnd::{eps_alpha_laplace, eps_gaussian, eps_kl_gnd, invert_divergence, numeric_renyi_divergence, DivergenceKind, GndParams};
use renyi_smooth::order::RenyiOrder;

fn main() -> renyi_smooth::Result<()> {
    let alpha = RenyiOrder::Finite(2.0);
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "t", "laplace", "quad(b=1)", "gaussian", "quad(b=2)");
    for t in [0.1, 0.5, 1.0, 2.0] {
        let lap = eps_alpha_laplace(t, alpha)?;
        let gau = eps_gaussian(t, alpha)?;
        let q1 = numeric_renyi_divergence(GndParams::new(0.0, 1.0, 1)?, t, alpha)?;
        let q2 = numeric_renyi_divergence(GndParams::new(0.0, 1.0, 2)?, t, alpha)?;
        println!("{t:>6} {lap:>12.6} {q1:>12.6} {gau:>12.6} {q2:>12.6}");
    }

    // KL divergence for even shapes, and the shift that spends a given budget
    for b in [2, 4, 10] {
        let kl = eps_kl_gnd(b, 0.5)?;
        let back = invert_divergence(DivergenceKind::KlGnd(b), kl)?;
        println!("b={b:<3} KL at t=0.5: {kl:.6}, inverted: {back:.6}");
    }
    Ok(())
}
