//! Thinning and Bernoulli switching agree in law: compare mode occupation on a
//! three-mode constant-rate chain against its stationary distribution.
//!
//! ```bash
//! cargo run --release --example schemes
//! ```

use nalgebra::DMatrix;
use switchdiff::chain::{stationary, truncate, Generator, Triplet};
use switchdiff::model::{scalar_table, LinearModel};
use switchdiff::sim::{simulate_range, Scheme, SimConfig};
use switchdiff::{Mode, PerMode, Segment};

fn main() -> switchdiff::Result<()> {
    let t = |i, j, rate| Triplet { i: Mode::of(i), j: Mode::of(j), rate };
    let g = Generator::from_triplets(&[t(1, 2, 1.0), t(2, 3, 2.0), t(3, 1, 0.5), t(3, 2, 0.5)])?;
    let nu = stationary(&truncate(&g, 3)?)?.nu;
    let m = LinearModel::frozen(
        "three_state",
        0.01,
        scalar_table(&PerMode::constant(-1.0)),
        PerMode::constant(vec![DMatrix::from_element(1, 1, 0.5)]),
        g,
    )?;

    let n = 200;
    let phi0 = Segment::constant(&[0.0], 0.01, 1e-3)?;
    println!("stationary nu: {nu:.4?}");
    for scheme in [Scheme::Thinning, Scheme::Bernoulli] {
        let cfg = SimConfig::new(0.01, 50.0, 11).with_dt(1e-3).with_scheme(scheme).with_stride(10);
        let recs = simulate_range(&m, &phi0, Mode::of(1), &cfg, 0, n)?;
        let mut mean = [0.0; 3];
        for r in &recs {
            for (k, f) in r.occupation(3).iter().enumerate() {
                mean[k] += f / n as f64;
            }
        }
        println!("{:>9}: occupation {mean:.4?}", scheme.to_string());
    }
    Ok(())
}
