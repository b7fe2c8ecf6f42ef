//! A small noise-level sweep: empirical and certified overlap per sigma,
//! written as CSV to stdout.

use renyi_smooth::eval::{run_sweep, SweepAxis, SweepBase, SweepSpec};

fn main() -> renyi_smooth::Result<()> {
    let spec = SweepSpec {
        axis: SweepAxis::Sigma,
        values: vec![0.05, 0.1, 0.2, 0.3],
        base: SweepBase {
            samples: 30,
            attack_iterations: 100,
            ..SweepBase::default()
        },
        repetitions: 4,
        seed: 7,
        record_time: false,
    };
    let table = run_sweep(&spec)?;
    table.write_csv(std::io::stdout().lock())?;
    for f in &table.failures {
        eprintln!("cell failed: {f:?}");
    }
    Ok(())
}
