//! Certify a fixed map: largest attack size for a target overlap under each
//! noise row, then the largest overlap for a fixed attack size.

use renyi_smooth::certify::{certify_beta, certify_max_attack, TopKSpec};
use renyi_smooth::order::NormOrder;

fn main() -> renyi_smooth::Result<()> {
    // a smoothly decaying 64-pixel map
    let raw: Vec<f64> = (0..64).map(|i| (-(i as f64) / 20.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    let m: Vec<f64> = raw.iter().map(|v| v / total).collect();

    let spec = TopKSpec::new(16, 0.75, m.len())?;
    println!("k={} beta={} needs k0={} displacements", spec.k, spec.beta, spec.k0);
    for d in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
        let d = NormOrder::new(d)?;
        let c = certify_max_attack(&m, spec, 0.1, d)?;
        println!(
            "d_prior={d:<4} row={:?} b={} alpha*={} L={:.6}{}",
            c.row,
            c.d_star,
            c.alpha_star,
            c.l,
            if c.dimension_penalty_applied { " (dimension penalty)" } else { "" }
        );
    }

    for l in [0.001, 0.005, 0.02] {
        let c = certify_beta(&m, 16, l, 0.1, NormOrder::INFINITY)?;
        println!("L={l}: certified beta {:.4}", c.beta);
    }
    Ok(())
}
