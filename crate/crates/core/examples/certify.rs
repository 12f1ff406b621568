//! Recurrence certificates for the bundled model configs.
//!
//! ```bash
//! cargo run --example certify
//! cargo run --example certify -- examples/linear_2d.json
//! ```

use std::path::PathBuf;

use switchdiff::certify::{certify, certify_stabilization, model_assumptions, CertifySettings, Form};
use switchdiff::model::load_model_config;

fn main() -> switchdiff::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples");
    let paths: Vec<PathBuf> = match std::env::args().nth(1) {
        Some(p) => vec![p.into()],
        None => ["switched_ou.json", "controlled_scalar.json", "controlled_scalar_open.json", "predator_prey.json"]
            .iter()
            .map(|f| dir.join(f))
            .collect(),
    };

    for path in paths {
        let (cfg, _) = load_model_config(&path)?;
        let entry = cfg.build()?;
        for form in [Form::Thm37, Form::Thm41] {
            let settings = CertifySettings { level: cfg.truncation(30), form, ..Default::default() };
            let cert = match &entry.control {
                Some(c) => certify_stabilization(&c.open_loop, &c.plan, &settings)?,
                None => certify(&entry.linearization, &settings)?,
            };
            let cert = cert.with_assumptions(model_assumptions(entry.model.as_ref(), &entry.linearization, settings.level)?);
            println!(
                "{:<28} {form}  sum {:+.6}  tail <= {:.2e} ({:?})  {:?}",
                path.file_name().unwrap().to_string_lossy(),
                cert.partial_sum,
                cert.tail_bound,
                cert.tail_source,
                cert.verdict,
            );
            for flag in cert.assumptions.iter().filter(|f| !f.pass) {
                println!("    failed {}: {}", flag.name, flag.detail);
            }
        }
    }
    Ok(())
}
