//! Sampling-based diagnostics for the standing assumptions. Each check runs on
//! a finite probe set and reports what it saw; none of them is a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{mat_vec_add, Linearization, SwitchingDiffusion};
use crate::chain::{communicating_classes, truncate, Generator};
use crate::error::{Error, Result};
use crate::mode::{Mode, RateRow};
use crate::segment::Segment;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_shapes<M: SwitchingDiffusion + ?Sized>(m: &M, lin: &Linearization, x: &[f64]) -> Result<()> {
    if x.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: x.len() });
    }
    if lin.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: lin.dim() });
    }
    if lin.brownian_dim() != m.brownian_dim() {
        return Err(Error::DimensionMismatch { expected: m.brownian_dim(), got: lin.brownian_dim() });
    }
    Ok(())
}

/// `b(x, i) - b(i) x`.
pub fn residual_drift<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    lin: &Linearization,
    x: &[f64],
    i: Mode,
) -> Result<Vec<f64>> {
    check_shapes(m, lin, x)?;
    let mut out = vec![0.0; m.dim()];
    m.drift(x, i, &mut out);
    let mut lin_part = vec![0.0; m.dim()];
    mat_vec_add(lin.drift.get(i), x, &mut lin_part);
    for (o, l) in out.iter_mut().zip(&lin_part) {
        *o -= l;
    }
    Ok(out)
}

/// `sigma(x, i) - (sigma_1(i) x, ..., sigma_d(i) x)`, row-major `n x d`.
pub fn residual_diffusion<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    lin: &Linearization,
    x: &[f64],
    i: Mode,
) -> Result<Vec<f64>> {
    check_shapes(m, lin, x)?;
    let (n, d) = (m.dim(), m.brownian_dim());
    let mut out = vec![0.0; n * d];
    m.diffusion(x, i, &mut out);
    let mut col = vec![0.0; n];
    for (k, s) in lin.noise.get(i).iter().enumerate() {
        col.fill(0.0);
        mat_vec_add(s, x, &mut col);
        for r in 0..n {
            out[r * d + k] -= col[r];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SublinearReport {
    pub radii: Vec<f64>,
    /// `max (|b-hat| v |sigma-hat|) / |x|` over directions and modes, per radius.
    pub ratios: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

fn validate_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty()
        || radii.iter().any(|&r| !(r > 0.0 && r.is_finite()))
        || radii.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidArgument("radii must be positive and increasing".into()));
    }
    Ok(())
}

fn nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15)
}

/// Probes `|b-hat(x, i)| v |sigma-hat(x, i)|` divided by `|x|` along rays.
/// Passes when the ratio is nonincreasing in the radius and ends below
/// `tolerance`.
pub fn check_sublinear_residuals<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    lin: &Linearization,
    directions: &[Vec<f64>],
    radii: &[f64],
    modes: &[Mode],
    tolerance: f64,
) -> Result<SublinearReport> {
    validate_radii(radii)?;
    let mut ratios = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut worst: f64 = 0.0;
        for dir in directions {
            let len = norm(dir);
            if len == 0.0 {
                return Err(Error::InvalidArgument("zero probe direction".into()));
            }
            let x: Vec<f64> = dir.iter().map(|v| v / len * r).collect();
            for &i in modes {
                let b = norm(&residual_drift(m, lin, &x, i)?);
                let s = norm(&residual_diffusion(m, lin, &x, i)?);
                worst = worst.max(b.max(s) / r);
            }
        }
        ratios.push(worst);
    }
    let pass = nonincreasing(&ratios) && ratios.last().is_some_and(|&v| v < tolerance);
    Ok(SublinearReport { radii: radii.to_vec(), ratios, tolerance, pass })
}

#[derive(Debug, Clone, Serialize)]
pub struct RateConvergenceReport {
    pub radii: Vec<f64>,
    /// `max sum_{j != i} |q_ij(phi) - q-hat_ij|` over probed constant segments
    /// with `|phi| >= R` and probed modes.
    pub deviations: Vec<f64>,
    pub pass: bool,
}

/// `sum_{j != i} |a_j - b_j|` over the union of the two supports.
pub fn row_deviation(a: &RateRow, b: &RateRow) -> f64 {
    let mut dev: f64 = a.iter().map(|(j, q)| (q - b.rate_to(j)).abs()).sum();
    dev += b.iter().filter(|(j, _)| a.rate_to(*j) == 0.0).map(|(_, q)| q.abs()).sum::<f64>();
    dev
}

fn probe_directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(2 * n + 1);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        dirs.push(e.clone());
        e[c] = -1.0;
        dirs.push(e);
    }
    if n > 1 {
        dirs.push(vec![1.0 / (n as f64).sqrt(); n]);
    }
    dirs
}

/// Probes `Q(phi)` against `Q-hat` on constant segments at radii
/// `R, 2R, ..., 2^(n_probe-1) R`. Passes when the worst deviation is
/// nonincreasing in `R`.
pub fn check_rate_convergence<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    lin: &Linearization,
    radii: &[f64],
    modes: &[Mode],
    n_probe: usize,
) -> Result<RateConvergenceReport> {
    validate_radii(radii)?;
    let n = m.dim();
    let dirs = probe_directions(n);
    let mut q = RateRow::new();
    let mut qhat = RateRow::new();
    let mut deviations = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut worst: f64 = 0.0;
        for k in 0..n_probe.max(1) {
            let rr = r * f64::powi(2.0, k as i32);
            for dir in &dirs {
                let x: Vec<f64> = dir.iter().map(|v| v * rr).collect();
                let seg = Segment::constant(&x, m.delay(), m.delay())?;
                for &i in modes {
                    m.rates(&seg, i, &mut q);
                    lin.qhat.row(i, &mut qhat);
                    worst = worst.max(row_deviation(&q, &qhat));
                }
            }
        }
        deviations.push(worst);
    }
    let pass = nonincreasing(&deviations);
    Ok(RateConvergenceReport { radii: radii.to_vec(), deviations, pass })
}

/// `sum_{j > k0} q_ij eta_j` with the diagonal term `-q_i eta_i` included.
fn drift_sum(row: &RateRow, i: Mode, k0: Mode, eta: &dyn Fn(Mode) -> f64) -> Result<f64> {
    let eval = |j: Mode| -> Result<f64> {
        let v = eta(j);
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta({j}) = {v}: eta must be bounded and nonnegative"
            )));
        }
        Ok(v)
    };
    let mut sum = -row.total() * eval(i)?;
    for (j, q) in row.iter() {
        if j > k0 && j != i {
            sum += q * eval(j)?;
        }
    }
    Ok(sum)
}

/// Checks `sum_{j > k0} q-hat_ij eta_j <= -1` for every probed `i > k0`.
/// `eta` is only read at modes above `k0`.
pub fn check_drift_condition_generator(
    generator: &Generator,
    k0: Mode,
    eta: &dyn Fn(Mode) -> f64,
    probe_modes: &[Mode],
) -> Result<bool> {
    let mut row = RateRow::new();
    for &i in probe_modes.iter().filter(|&&i| i > k0) {
        generator.row(i, &mut row);
        if drift_sum(&row, i, k0, eta)? > -1.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Same inequality for the path-dependent rates `q_ij(phi)` at each probe
/// segment.
pub fn check_drift_condition<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    k0: Mode,
    eta: &dyn Fn(Mode) -> f64,
    probe_modes: &[Mode],
    probe_segments: &[Segment],
) -> Result<bool> {
    let mut row = RateRow::new();
    for seg in probe_segments {
        for &i in probe_modes.iter().filter(|&&i| i > k0) {
            m.rates(seg, i, &mut row);
            if drift_sum(&row, i, k0, eta)? > -1.0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Strong connectivity of the truncation of `Q-hat` at `level`.
pub fn check_irreducible(generator: &Generator, level: usize) -> Result<bool> {
    Ok(communicating_classes(&truncate(generator, level)?.matrix) == 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct RateBoundReport {
    pub max_total: f64,
    pub bound: f64,
    pub min_rate: f64,
    pub pass: bool,
}

/// Nonnegativity of every off-diagonal rate and `q_i(phi) <= M` on the probes.
/// The diagonal is `-q_i(phi)` by construction, so rows sum to zero.
pub fn check_rate_bound<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    modes: &[Mode],
    segments: &[Segment],
) -> RateBoundReport {
    let mut row = RateRow::new();
    let mut max_total: f64 = 0.0;
    let mut min_rate = f64::INFINITY;
    for seg in segments {
        for &i in modes {
            m.rates(seg, i, &mut row);
            max_total = max_total.max(row.total());
            for (_, q) in row.iter() {
                min_rate = min_rate.min(q);
            }
        }
    }
    let bound = m.rate_bound();
    RateBoundReport {
        max_total,
        bound,
        min_rate,
        pass: max_total <= bound && !(min_rate < 0.0),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub radius: f64,
    pub pairs: usize,
    /// Largest `(|b(x)-b(y)| + |sigma(x)-sigma(y)|) / |x - y|` seen.
    pub max_quotient: f64,
    pub pass: bool,
}

/// Finite-difference smoke test of local Lipschitz continuity on `|x| <= H`.
pub fn check_local_lipschitz<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    modes: &[Mode],
    radius: f64,
    pairs: usize,
    seed: u64,
) -> LipschitzReport {
    let (n, d) = (m.dim(), m.brownian_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = norm(&v).max(1.0);
        v.iter().map(|x| x / len * radius).collect()
    };
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let (mut sx, mut sy) = (vec![0.0; n * d], vec![0.0; n * d]);
    let mut max_quotient: f64 = 0.0;
    for _ in 0..pairs {
        let x = point(&mut rng);
        let y = point(&mut rng);
        let dist = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        if dist == 0.0 {
            continue;
        }
        for &i in modes {
            m.drift(&x, i, &mut bx);
            m.drift(&y, i, &mut by);
            m.diffusion(&x, i, &mut sx);
            m.diffusion(&y, i, &mut sy);
            let db = norm(&bx.iter().zip(&by).map(|(a, b)| a - b).collect::<Vec<_>>());
            let ds = norm(&sx.iter().zip(&sy).map(|(a, b)| a - b).collect::<Vec<_>>());
            max_quotient = max_quotient.max((db + ds) / dist);
        }
    }
    LipschitzReport { radius, pairs, max_quotient, pass: max_quotient.is_finite() }
}
