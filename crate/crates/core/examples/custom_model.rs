//! A user-defined model: a planar system whose switching rate to the
//! "stressed" mode depends on the average of the state over the last unit of
//! time, simulated and certified like the built-in families.
//!
//! ```bash
//! cargo run --example custom_model
//! ```

use std::sync::Arc;

use nalgebra::DMatrix;
use switchdiff::certify::{certify, CertifySettings};
use switchdiff::chain::Generator;
use switchdiff::model::{LinearModel, RateLaw};
use switchdiff::sim::{simulate, SimConfig};
use switchdiff::{Mode, PerMode, RateRow, Segment};

fn main() -> switchdiff::Result<()> {
    let delay = 1.0;
    let calm = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -1.0]);
    let stressed = DMatrix::from_row_slice(2, 2, &[0.2, 1.0, -1.0, 0.2]);
    let noise = vec![DMatrix::from_diagonal_element(2, 2, 0.3)];
    // two-mode process; the calm -> stressed rate grows with the mean of |x|
    // over the window and tends to 1 for large states
    let weights: Vec<(f64, f64)> = (0..=10).map(|k| (-delay * k as f64 / 10.0, 1.0 / 11.0)).collect();
    let rates = RateLaw::Path(Arc::new(move |seg: &Segment, i: Mode, row: &mut RateRow| {
        let m: f64 = weights
            .iter()
            .map(|&(s, w)| w * seg.value_at(s).map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt()).unwrap_or(0.0))
            .sum();
        row.clear();
        if i == Mode::of(1) {
            row.add(Mode::of(2), m / (1.0 + m));
        } else {
            row.add(Mode::of(1), 2.0);
        }
    }));
    let model = LinearModel::new(
        "stressed_planar",
        delay,
        PerMode::new(vec![calm, stressed]).expect("two modes"),
        PerMode::constant(noise),
        rates,
        2.0,
    )?;

    let qhat = Generator::two_state(1.0, 2.0)?;
    let lin = model.linearization(qhat)?;
    let cert = certify(&lin, &CertifySettings { level: 2, ..Default::default() })?;
    println!("per-mode c: {:.4?}", cert.per_mode_c);
    println!("sum {:+.4} -> {:?}", cert.partial_sum, cert.verdict);

    let sim = SimConfig::new(delay, 30.0, 9).with_stride(1000);
    let phi0 = Segment::constant(&[20.0, -20.0], delay, sim.dt)?;
    let rec = simulate(&model, &phi0, Mode::of(1), &sim)?;
    for k in 0..rec.len() {
        let x = rec.state(k);
        println!("  t = {:>5.1}  x = ({:+.3}, {:+.3})  mode {}", rec.times[k], x[0], x[1], rec.modes[k]);
    }
    Ok(())
}
