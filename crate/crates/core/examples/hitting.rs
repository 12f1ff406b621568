//! Mean return time to `{|X| <= H} x {1, ..., k0}` for a certified model, and
//! how the estimate reacts to the censoring horizon.
//!
//! ```bash
//! cargo run --release --example hitting
//! ```

use std::path::PathBuf;

use switchdiff::model::{load_model_config, SwitchingDiffusion};
use switchdiff::sim::SimConfig;
use switchdiff::verify::{estimate_hitting_time, estimate_mode_descent};
use switchdiff::{Mode, Segment};

fn main() -> switchdiff::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/switched_ou.json");
    let (cfg, _) = load_model_config(&path)?;
    let entry = cfg.build()?;
    let m = entry.model.as_ref();

    for horizon in [25.0, 50.0] {
        let sim = SimConfig::new(m.delay(), horizon, 1);
        let phi0 = Segment::constant(&[10.0], m.delay(), sim.dt)?;
        let est = estimate_hitting_time(m, &phi0, Mode::of(4), 1.0, Mode::of(2), &sim, 400)?;
        println!(
            "T = {horizon:>5}: E tau = {:.3} +- {:.3}, censored {:.2}%",
            est.mean,
            est.std_error,
            100.0 * est.censored_fraction
        );
    }

    let sim = SimConfig::new(m.delay(), 50.0, 2);
    let phi0 = Segment::constant(&[10.0], m.delay(), sim.dt)?;
    let est = estimate_mode_descent(m, &phi0, Mode::of(8), Mode::of(2), &sim, 400)?;
    println!("mode 8 -> {{1, 2}}: E sigma = {:.3} +- {:.3}", est.mean, est.std_error);
    Ok(())
}
