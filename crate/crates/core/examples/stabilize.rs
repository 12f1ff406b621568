//! Feedback design: find the smallest uniform gain on the controllable modes
//! that certifies the closed loop.
//!
//! ```bash
//! cargo run --example stabilize
//! ```

use std::path::PathBuf;

use switchdiff::certify::{certify_stabilization, search_gain, CertifySettings, GainBudget, GainPlan};
use switchdiff::model::load_model_config;

fn main() -> switchdiff::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/controlled_scalar_open.json");
    let (cfg, _) = load_model_config(&path)?;
    let entry = cfg.build()?;
    let control = entry.control.as_ref().expect("controlled_scalar has an input");
    let settings = CertifySettings { level: 40, ..Default::default() };

    let open = certify_stabilization(&control.open_loop, &control.plan, &settings)?;
    println!("open loop: sum {:+.4} -> {:?}", open.partial_sum, open.verdict);

    for g in [1.0, 2.0, 3.0] {
        let plan = GainPlan::uniform(control.plan.controllable().clone(), control.plan.inputs().clone(), g)?;
        let cert = certify_stabilization(&control.open_loop, &plan, &settings)?;
        println!("L(1) = {g}: sum {:+.4} -> {:?}", cert.partial_sum, cert.verdict);
    }

    let budget = GainBudget::default();
    match search_gain(&control.open_loop, control.plan.inputs(), control.plan.controllable(), &settings, &budget)? {
        Some((plan, cert)) => {
            for e in plan.entries() {
                println!("smallest certified gain: mode {} L = {:?}", e.mode, e.gain);
            }
            println!("certificate sum {:+.4}", cert.partial_sum);
        }
        None => println!("no gain in [{}, {}] certifies the closed loop", budget.g_min, budget.g_max),
    }
    Ok(())
}
