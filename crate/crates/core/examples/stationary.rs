//! Stationary law of a truncated countable-mode chain and how it settles as the
//! truncation level grows.
//!
//! ```bash
//! cargo run --example stationary
//! ```

use switchdiff::chain::{convergence_sweep, geometric_tail, stationary, truncate, Generator};

fn main() -> switchdiff::Result<()> {
    for g in [Generator::reset_two_or_advance(), Generator::reset_one_or_advance()] {
        let tg = truncate(&g, 30)?;
        let dist = stationary(&tg)?;
        println!("{} (N = 30, lumping: {})", g.name(), tg.lump_policy);
        for (k, p) in dist.nu.iter().take(6).enumerate() {
            println!("  nu[{}] = {p:.12}", k + 1);
        }
        println!("  residual |nu Q| = {:.2e}", dist.residual);
        if let Some((ratio, mass)) = geometric_tail(&dist.nu) {
            println!("  tail ratio {ratio:.6}, extrapolated mass beyond N {mass:.2e}");
        }

        println!("  sweep:");
        for row in convergence_sweep(&g, &[5, 10, 20, 40])? {
            let change = row.l1_change.map_or("-".to_string(), |c| format!("{c:.2e}"));
            println!("    N = {:>3}  nu[1] = {:.10}  l1 change {change}", row.level, row.head[0]);
        }
    }
    Ok(())
}
