//! Basic coupling of the path-dependent mode process with its large-state
//! limit: the further out the start, the less often the two ever disagree
//! before the state returns to the unit ball.
//!
//! ```bash
//! cargo run --release --example coupling
//! ```

use std::path::PathBuf;

use switchdiff::model::{load_model_config, SwitchingDiffusion};
use switchdiff::sim::SimConfig;
use switchdiff::verify::coupling_decay;
use switchdiff::Mode;

fn main() -> switchdiff::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/switched_ou_weak.json");
    let (cfg, _) = load_model_config(&path)?;
    let entry = cfg.build()?;
    let m = entry.model.as_ref();

    let sim = SimConfig::new(m.delay(), 10.0, 3);
    let radii = [10.0, 100.0, 1000.0];
    let rows = coupling_decay(m, &entry.linearization.qhat, &radii, 1.0, Mode::of(1), &sim, 500)?;
    for row in rows {
        let p = row.decoupled;
        println!(
            "R = {:>6}: P(decoupled before T and return) = {:.3}  95% CI [{:.3}, {:.3}]",
            row.radius, p.p, p.ci_low, p.ci_high
        );
    }
    Ok(())
}
