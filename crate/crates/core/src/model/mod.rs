//! Switching-diffusion models `dX = b(X, a) dt + sigma(X, a) dW` whose mode
//! `a` jumps with rates `q_ij(X_t)` depending on the memory segment, together
//! with their linearization at infinity.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::chain::Generator;
use crate::error::{Error, Result};
use crate::mode::{Mode, PerMode, RateRow};
use crate::segment::Segment;

mod checks;
mod config;
mod families;

pub use checks::{
    check_drift_condition, check_drift_condition_generator, check_irreducible,
    check_local_lipschitz, check_rate_bound, check_rate_convergence, check_sublinear_residuals,
    residual_diffusion, residual_drift, LipschitzReport, RateBoundReport, RateConvergenceReport,
    SublinearReport,
};
pub use config::{load_model_config, ModelConfig};
pub use families::{registry_get, ControlData, RegistryEntry, FAMILIES};

/// The coefficient and rate callbacks a simulator needs.
///
/// `diffusion` writes an `n x d` matrix in row-major order. `rates` writes
/// the off-diagonal entries of row `mode` of `Q(phi)`; the diagonal is
/// implied by conservativeness.
pub trait SwitchingDiffusion: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn brownian_dim(&self) -> usize;
    /// Memory length `r` of the segment the rates read.
    fn delay(&self) -> f64;
    fn drift(&self, x: &[f64], mode: Mode, out: &mut [f64]);
    fn diffusion(&self, x: &[f64], mode: Mode, out: &mut [f64]);
    fn rates(&self, seg: &Segment, mode: Mode, out: &mut RateRow);
    /// Uniform bound `M >= q_i(phi)` for all `phi`, `i`.
    fn rate_bound(&self) -> f64;
    /// Applied to the state after every step (identity unless the model has a
    /// boundary).
    fn project(&self, _x: &mut [f64]) {}
}

pub type PathRateFn = dyn Fn(&Segment, Mode, &mut RateRow) + Send + Sync;
pub type ResidualFn = dyn Fn(&[f64], Mode, &mut [f64]) + Send + Sync;

/// How the mode's jump rates depend on the path.
#[derive(Clone)]
pub enum RateLaw {
    /// `Q(phi) = Q-hat` for every segment.
    Frozen(Generator),
    /// Past-dependent rates `q_ij(phi)`.
    Path(Arc<PathRateFn>),
}

impl fmt::Debug for RateLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateLaw::Frozen(g) => f.debug_tuple("Frozen").field(g).finish(),
            RateLaw::Path(_) => f.write_str("Path(..)"),
        }
    }
}

/// Linearization at infinity: matrices `b(i)`, `sigma_k(i)` and the limiting
/// generator `Q-hat`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub drift: PerMode<DMatrix<f64>>,
    pub noise: PerMode<Vec<DMatrix<f64>>>,
    pub qhat: Generator,
    /// Frobenius-norm bound on every `b(i)` and `sigma_k(i)`.
    pub coeff_bound: f64,
}

impl Linearization {
    pub fn new(
        drift: PerMode<DMatrix<f64>>,
        noise: PerMode<Vec<DMatrix<f64>>>,
        qhat: Generator,
    ) -> Result<Linearization> {
        let n = drift.get(Mode::FIRST).nrows();
        let d = noise.get(Mode::FIRST).len();
        if n == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        let mut bound: f64 = 0.0;
        for b in drift.head() {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: b.nrows().max(b.ncols()) });
            }
            bound = bound.max(b.norm());
        }
        for sig in noise.head() {
            if sig.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: sig.len() });
            }
            for s in sig {
                if s.nrows() != n || s.ncols() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: s.nrows().max(s.ncols()) });
                }
                bound = bound.max(s.norm());
            }
        }
        Ok(Linearization { drift, noise, qhat, coeff_bound: bound })
    }

    pub fn dim(&self) -> usize {
        self.drift.get(Mode::FIRST).nrows()
    }

    pub fn brownian_dim(&self) -> usize {
        self.noise.get(Mode::FIRST).len()
    }

    /// Longest explicit coefficient head; modes past it repeat the last entry.
    pub fn head_len(&self) -> usize {
        self.drift.head_len().max(self.noise.head_len())
    }
}

/// `out += m x`.
pub(crate) fn mat_vec_add(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for c in 0..m.ncols() {
        let xc = x[c];
        if xc == 0.0 {
            continue;
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o += m[(r, c)] * xc;
        }
    }
}

/// A model that is linear in `x` per mode plus optional residual terms:
/// `b(x, i) = b(i) x + b_res(x, i)` and column `k` of `sigma(x, i)` equal to
/// `sigma_k(i) x` plus the matching column of `sigma_res(x, i)`.
///
/// Every registry family is an instance; user models are built the same way
/// with closures for the residuals and the rates.
#[derive(Clone)]
pub struct LinearModel {
    name: String,
    delay: f64,
    dim: usize,
    brownian_dim: usize,
    drift: PerMode<DMatrix<f64>>,
    noise: PerMode<Vec<DMatrix<f64>>>,
    drift_residual: Option<Arc<ResidualFn>>,
    diffusion_residual: Option<Arc<ResidualFn>>,
    rates: RateLaw,
    rate_bound: f64,
    nonnegative: bool,
}

impl fmt::Debug for LinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("brownian_dim", &self.brownian_dim)
            .field("delay", &self.delay)
            .field("rates", &self.rates)
            .field("rate_bound", &self.rate_bound)
            .finish()
    }
}

impl LinearModel {
    pub fn new(
        name: impl Into<String>,
        delay: f64,
        drift: PerMode<DMatrix<f64>>,
        noise: PerMode<Vec<DMatrix<f64>>>,
        rates: RateLaw,
        rate_bound: f64,
    ) -> Result<LinearModel> {
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(Error::InvalidArgument(format!("delay must be positive, got {delay}")));
        }
        if !(rate_bound >= 0.0 && rate_bound.is_finite()) {
            return Err(Error::InvalidArgument(format!("rate bound must be finite, got {rate_bound}")));
        }
        let dim = drift.get(Mode::FIRST).nrows();
        let brownian_dim = noise.get(Mode::FIRST).len();
        for b in drift.head() {
            if b.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: b.nrows() });
            }
        }
        for sig in noise.head() {
            if sig.len() != brownian_dim {
                return Err(Error::DimensionMismatch { expected: brownian_dim, got: sig.len() });
            }
            if let Some(s) = sig.iter().find(|s| s.shape() != (dim, dim)) {
                return Err(Error::DimensionMismatch { expected: dim, got: s.nrows() });
            }
        }
        if dim == 0 || brownian_dim == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if let RateLaw::Frozen(g) = &rates {
            if g.rate_bound() > rate_bound {
                return Err(Error::InvalidArgument(format!(
                    "rate bound {rate_bound} is below the generator's {}",
                    g.rate_bound()
                )));
            }
        }
        Ok(LinearModel {
            name: name.into(),
            delay,
            dim,
            brownian_dim,
            drift,
            noise,
            drift_residual: None,
            diffusion_residual: None,
            rates,
            rate_bound,
            nonnegative: false,
        })
    }

    /// Scalar or vector model with `Q(phi) = Q-hat` and no noise: handy for
    /// tests and examples.
    pub fn frozen(
        name: impl Into<String>,
        delay: f64,
        drift: PerMode<DMatrix<f64>>,
        noise: PerMode<Vec<DMatrix<f64>>>,
        qhat: Generator,
    ) -> Result<LinearModel> {
        let bound = qhat.rate_bound();
        LinearModel::new(name, delay, drift, noise, RateLaw::Frozen(qhat), bound)
    }

    /// Adds `b_res(x, i)` to the drift; the closure accumulates into `out`.
    pub fn with_drift_residual(
        mut self,
        f: impl Fn(&[f64], Mode, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.drift_residual = Some(Arc::new(f));
        self
    }

    /// Adds `sigma_res(x, i)` (row-major `n x d`) to the diffusion.
    pub fn with_diffusion_residual(
        mut self,
        f: impl Fn(&[f64], Mode, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.diffusion_residual = Some(Arc::new(f));
        self
    }

    /// Projects the state onto the nonnegative orthant after each step.
    pub fn with_nonnegative_state(mut self) -> Self {
        self.nonnegative = true;
        self
    }

    /// Raises the advertised rate bound (a larger bound is always valid for
    /// thinning).
    pub fn with_rate_bound(mut self, bound: f64) -> Result<Self> {
        if bound < self.rate_bound {
            return Err(Error::InvalidArgument(format!(
                "rate bound {bound} is below the model's {}",
                self.rate_bound
            )));
        }
        self.rate_bound = bound;
        Ok(self)
    }

    pub fn rate_law(&self) -> &RateLaw {
        &self.rates
    }

    pub fn linear_drift(&self) -> &PerMode<DMatrix<f64>> {
        &self.drift
    }

    pub fn linear_noise(&self) -> &PerMode<Vec<DMatrix<f64>>> {
        &self.noise
    }

    /// Linearization with the given limiting generator.
    pub fn linearization(&self, qhat: Generator) -> Result<Linearization> {
        Linearization::new(self.drift.clone(), self.noise.clone(), qhat)
    }
}

impl SwitchingDiffusion for LinearModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }

    fn delay(&self) -> f64 {
        self.delay
    }

    fn drift(&self, x: &[f64], mode: Mode, out: &mut [f64]) {
        out.fill(0.0);
        mat_vec_add(self.drift.get(mode), x, out);
        if let Some(f) = &self.drift_residual {
            f(x, mode, out);
        }
    }

    fn diffusion(&self, x: &[f64], mode: Mode, out: &mut [f64]) {
        out.fill(0.0);
        let d = self.brownian_dim;
        for (k, s) in self.noise.get(mode).iter().enumerate() {
            for c in 0..self.dim {
                let xc = x[c];
                if xc == 0.0 {
                    continue;
                }
                for r in 0..self.dim {
                    out[r * d + k] += s[(r, c)] * xc;
                }
            }
        }
        if let Some(f) = &self.diffusion_residual {
            f(x, mode, out);
        }
    }

    fn rates(&self, seg: &Segment, mode: Mode, out: &mut RateRow) {
        match &self.rates {
            RateLaw::Frozen(g) => g.row(mode, out),
            RateLaw::Path(f) => f(seg, mode, out),
        }
    }

    fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    fn project(&self, x: &mut [f64]) {
        if self.nonnegative {
            for v in x {
                *v = v.max(0.0);
            }
        }
    }
}

/// Scalar helper: `1 x 1` matrices from a per-mode list.
pub fn scalar_table(values: &PerMode<f64>) -> PerMode<DMatrix<f64>> {
    values.map(|&v| DMatrix::from_element(1, 1, v))
}
