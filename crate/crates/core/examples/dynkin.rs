//! Dynkin's formula as a simulation check: `E V(X_t, a_t) - V(X_0, a_0)`
//! minus `E int_0^t LV ds` should vanish within Monte Carlo error.
//!
//! ```bash
//! cargo run --release --example dynkin
//! ```

use std::path::PathBuf;

use switchdiff::model::{load_model_config, SwitchingDiffusion};
use switchdiff::sim::SimConfig;
use switchdiff::verify::{dynkin_residual, ProductFunctional};
use switchdiff::{Mode, Segment};

fn main() -> switchdiff::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/switched_ou.json");
    let (cfg, _) = load_model_config(&path)?;
    let entry = cfg.build()?;
    let m = entry.model.as_ref();

    let sim = SimConfig::new(m.delay(), 1.0, 5).with_dt(1e-3);
    let phi0 = Segment::constant(&[1.5], m.delay(), sim.dt)?;
    let functionals = [
        ("|x|^2", ProductFunctional::squared_norm()),
        ("1", ProductFunctional::constant(1.0)),
        ("mode weight", ProductFunctional::mode_weights(vec![1.0, 2.0, 0.5])),
    ];
    for (name, v) in functionals {
        let est = dynkin_residual(&v, m, &phi0, Mode::of(1), 1.0, &sim, 2000)?;
        println!(
            "V = {name:<12} residual {:+.5} +- {:.5} ({:.1} SE)",
            est.mean,
            est.std_error,
            if est.std_error > 0.0 { est.mean / est.std_error } else { 0.0 }
        );
    }
    Ok(())
}
