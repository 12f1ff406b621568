//! Simulate one path of the switched OU model and print a coarse trace, the
//! jump log and the time spent in each mode.
//!
//! ```bash
//! cargo run --example simulate -- 7      # seed 7
//! ```

use std::path::PathBuf;

use switchdiff::model::{load_model_config, SwitchingDiffusion};
use switchdiff::sim::{simulate, SimConfig};
use switchdiff::{Mode, Segment};

fn main() -> switchdiff::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/switched_ou.json");
    let (cfg, _) = load_model_config(&path)?;
    let entry = cfg.build()?;
    let m = entry.model.as_ref();

    let sim = SimConfig::new(m.delay(), 20.0, seed).with_stride(500);
    let phi0 = Segment::constant(&[5.0], m.delay(), sim.dt)?;
    let rec = simulate(m, &phi0, Mode::of(1), &sim)?;

    println!("dt = {}, {} recorded points, {} jumps", sim.dt, rec.len(), rec.jumps.len());
    for k in 0..rec.len() {
        println!("  t = {:>6.2}  x = {:>+8.4}  mode {}", rec.times[k], rec.state(k)[0], rec.modes[k]);
    }
    for j in rec.jumps.iter().take(8) {
        println!("  jump at {:.4}: {} -> {}", j.t, j.from, j.to);
    }
    let fine = simulate(m, &phi0, Mode::of(1), &sim.with_stride(1))?;
    println!("fraction of grid time in modes 1..5: {:.3?}", fine.occupation(5));
    Ok(())
}
