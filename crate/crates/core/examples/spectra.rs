//! The three spectral quantities behind the criterion for a few matrices.
//!
//! ```bash
//! cargo run --example spectra
//! ```

use nalgebra::DMatrix;
use switchdiff::spectra::{a_of_i, summarize};

fn main() -> switchdiff::Result<()> {
    let cases = [
        ("rotation + damping", DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.5])),
        ("indefinite", DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0])),
        ("skew", DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0])),
        ("positive", DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 3.0, 1.0, 0.0, 0.0, 4.0])),
    ];
    for (name, a) in &cases {
        let s = summarize(a)?;
        println!("{name:<20} Lambda {:+.4}  lambda {:+.4}  rho {:.4}", s.lambda_max, s.lambda_min, s.rho);
    }

    let sigmas = vec![DMatrix::from_diagonal_element(2, 2, 0.5), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])];
    let a = a_of_i(&sigmas)?;
    println!("a = sum sigma^T sigma = {a}");
    Ok(())
}
