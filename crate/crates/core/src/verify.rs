//! Monte Carlo corroboration: hitting and mode-descent times, the Dynkin
//! identity for product-form path functionals, coupling decay, start
//! independence of occupation measures, escape probabilities and moment
//! growth. Every estimator is a fold over independent paths.

use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::chain::Generator;
use crate::error::{Error, Result};
use crate::mode::{Mode, RateRow};
use crate::model::SwitchingDiffusion;
use crate::segment::Segment;
use crate::sim::{run_paths, Path, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    /// Mean over the uncensored paths.
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub n_used: u64,
    /// Paths that did not reach the event before the horizon.
    pub censored_fraction: f64,
    /// Paths discarded after a numerical blow-up.
    pub blown_up: u64,
    /// False when no path produced a value.
    pub usable: bool,
}

/// Per-path outcome of an estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Value(f64),
    Censored,
    BlownUp,
}

impl MCEstimate {
    /// Folds per-path outcomes in index order.
    pub fn from_outcomes(outcomes: &[Outcome]) -> MCEstimate {
        let mut n_used = 0u64;
        let mut censored = 0u64;
        let mut blown = 0u64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        // two passes keep the variance accurate for large means
        for o in outcomes {
            match o {
                Outcome::Value(v) => {
                    n_used += 1;
                    sum += v;
                }
                Outcome::Censored => censored += 1,
                Outcome::BlownUp => blown += 1,
            }
        }
        let mean = if n_used > 0 { sum / n_used as f64 } else { f64::NAN };
        for o in outcomes {
            if let Outcome::Value(v) = o {
                sum_sq += (v - mean) * (v - mean);
            }
        }
        let std_error = if n_used > 1 {
            (sum_sq / (n_used - 1) as f64 / n_used as f64).sqrt()
        } else {
            0.0
        };
        let n = outcomes.len() as u64;
        MCEstimate {
            mean,
            std_error,
            n_samples: n,
            n_used,
            censored_fraction: if n > 0 { censored as f64 / n as f64 } else { 0.0 },
            blown_up: blown,
            usable: n_used > 0,
        }
    }
}

fn check_paths(n_paths: u64) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("at least one path required".into()));
    }
    Ok(())
}

/// Runs one path until `stop` returns a value or the horizon is reached.
fn first_passage<M: SwitchingDiffusion + ?Sized>(
    path: &mut Path<'_, M>,
    mut stop: impl FnMut(&Path<'_, M>) -> Option<f64>,
) -> Outcome {
    if let Some(v) = stop(path) {
        return Outcome::Value(v);
    }
    let n = path.config().steps();
    for _ in 0..n {
        if !path.step() {
            return Outcome::BlownUp;
        }
        if let Some(v) = stop(path) {
            return Outcome::Value(v);
        }
    }
    Outcome::Censored
}

/// `tau = inf{t : ||X_t|| <= H, a(t) <= k0}` observed on the grid, with the
/// segment sup norm over `[t - r, t]`.
pub fn estimate_hitting_time<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    phi0: &Segment,
    i0: Mode,
    h: f64,
    k0: Mode,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<MCEstimate> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("H must be positive, got {h}")));
    }
    check_paths(n_paths)?;
    cfg.validate(m)?;
    let outcomes = run_paths(0, n_paths, |k| {
        let mut path = Path::new(m, phi0, i0, cfg, k).expect("validated");
        first_passage(&mut path, |p| {
            (p.segment().sup_norm() <= h && p.mode() <= k0).then(|| p.time())
        })
    });
    Ok(MCEstimate::from_outcomes(&outcomes))
}

/// `zeta = inf{t : a(t) <= k0}`, at the exact jump time.
pub fn estimate_mode_descent<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    phi0: &Segment,
    i0: Mode,
    k0: Mode,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<MCEstimate> {
    check_paths(n_paths)?;
    cfg.validate(m)?;
    let outcomes = run_paths(0, n_paths, |k| {
        let mut path = Path::new(m, phi0, i0, cfg, k).expect("validated");
        first_passage(&mut path, |p| {
            if p.steps() == 0 {
                return (p.mode() <= k0).then_some(0.0);
            }
            p.last_jumps().iter().find(|j| j.to <= k0).map(|j| j.t)
        })
    });
    Ok(MCEstimate::from_outcomes(&outcomes))
}

type PointFn = dyn Fn(&[f64], Mode) -> f64 + Send + Sync;
type ArrayFn = dyn Fn(&[f64], Mode, &mut [f64]) + Send + Sync;
type TimeFn = dyn Fn(f64, Mode) -> f64 + Send + Sync;

/// `V(phi, i) = f1(phi(0), i) + int_{-r}^0 g(s, i) f2(phi(s), i) ds`.
///
/// The gradient writes `n` entries and the Hessian `n * n` (row-major).
#[derive(Clone, Default)]
pub struct ProductFunctional {
    f1: Option<Arc<PointFn>>,
    grad: Option<Arc<ArrayFn>>,
    hess: Option<Arc<ArrayFn>>,
    f2: Option<Arc<PointFn>>,
    g: Option<Arc<TimeFn>>,
    dg: Option<Arc<TimeFn>>,
}

impl std::fmt::Debug for ProductFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProductFunctional")
            .field("f1", &self.f1.is_some())
            .field("f2", &self.f2.is_some())
            .finish()
    }
}

impl ProductFunctional {
    pub fn new() -> Self {
        ProductFunctional::default()
    }

    pub fn with_point(
        mut self,
        f1: impl Fn(&[f64], Mode) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], Mode, &mut [f64]) + Send + Sync + 'static,
        hess: impl Fn(&[f64], Mode, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.f1 = Some(Arc::new(f1));
        self.grad = Some(Arc::new(grad));
        self.hess = Some(Arc::new(hess));
        self
    }

    /// Point term without derivatives: `V` can be evaluated but not `LV`.
    pub fn with_point_value(mut self, f1: impl Fn(&[f64], Mode) -> f64 + Send + Sync + 'static) -> Self {
        self.f1 = Some(Arc::new(f1));
        self
    }

    pub fn with_memory(
        mut self,
        f2: impl Fn(&[f64], Mode) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64, Mode) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64, Mode) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.f2 = Some(Arc::new(f2));
        self.g = Some(Arc::new(g));
        self.dg = Some(Arc::new(dg));
        self
    }

    pub fn with_memory_value(
        mut self,
        f2: impl Fn(&[f64], Mode) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64, Mode) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.f2 = Some(Arc::new(f2));
        self.g = Some(Arc::new(g));
        self
    }

    /// `V = |x|^2`.
    pub fn squared_norm() -> Self {
        ProductFunctional::new().with_point(
            |x, _| x.iter().map(|v| v * v).sum(),
            |x, _, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 2.0 * v;
                }
            },
            |x, _, out| {
                let n = x.len();
                out.fill(0.0);
                for k in 0..n {
                    out[k * n + k] = 2.0;
                }
            },
        )
    }

    pub fn constant(c: f64) -> Self {
        ProductFunctional::new().with_point(
            move |_, _| c,
            |_, _, out| out.fill(0.0),
            |_, _, out| out.fill(0.0),
        )
    }

    /// `V(phi, i) = w_i` (the last weight repeats).
    pub fn mode_weights(w: Vec<f64>) -> Self {
        let last = *w.last().expect("at least one weight");
        ProductFunctional::new().with_point(
            move |_, i| w.get(i.index()).copied().unwrap_or(last),
            |_, _, out| out.fill(0.0),
            |_, _, out| out.fill(0.0),
        )
    }

    fn memory_integral(&self, seg: &Segment, i: Mode) -> f64 {
        let (Some(f2), Some(g)) = (&self.f2, &self.g) else {
            return 0.0;
        };
        let h = seg.step();
        let last = seg.len() - 1;
        seg.samples()
            .zip(seg.grid())
            .enumerate()
            .map(|(k, (x, s))| {
                let w = if k == 0 || k == last { 0.5 } else { 1.0 };
                w * g(s, i) * f2(x, i)
            })
            .sum::<f64>()
            * h
    }

    pub fn value(&self, seg: &Segment, i: Mode) -> f64 {
        let point = self.f1.as_ref().map_or(0.0, |f| f(seg.newest(), i));
        point + self.memory_integral(seg, i)
    }

    /// `V_t = g(0) f2(phi(0)) - g(-r) f2(phi(-r)) - int f2 dg`, trapezoid rule.
    pub fn horizontal(&self, seg: &Segment, i: Mode) -> Result<f64> {
        let (Some(f2), Some(g)) = (&self.f2, &self.g) else {
            return Ok(0.0);
        };
        let dg = self.dg.as_ref().ok_or(Error::MissingDerivative("time derivative of g"))?;
        let h = seg.step();
        let last = seg.len() - 1;
        let int: f64 = seg
            .samples()
            .zip(seg.grid())
            .enumerate()
            .map(|(k, (x, s))| {
                let w = if k == 0 || k == last { 0.5 } else { 1.0 };
                w * f2(x, i) * dg(s, i)
            })
            .sum::<f64>()
            * h;
        Ok(g(0.0, i) * f2(seg.newest(), i) - g(-seg.delay(), i) * f2(seg.oldest(), i) - int)
    }
}

/// Scratch space for generator evaluation.
struct Workspace {
    grad: Vec<f64>,
    hess: Vec<f64>,
    drift: Vec<f64>,
    diff: Vec<f64>,
    row: RateRow,
}

impl Workspace {
    fn new(n: usize, d: usize) -> Workspace {
        Workspace {
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
            drift: vec![0.0; n],
            diff: vec![0.0; n * d],
            row: RateRow::new(),
        }
    }
}

/// `LV(phi, i)` and, as second value, `b^T (Hess f1) b`, the second-order
/// drift term an Euler step adds over `dt^2 / 2`.
fn generator_terms<M: SwitchingDiffusion + ?Sized>(
    v: &ProductFunctional,
    m: &M,
    seg: &Segment,
    i: Mode,
    ws: &mut Workspace,
) -> Result<(f64, f64)> {
    let (n, d) = (m.dim(), m.brownian_dim());
    let x = seg.newest();
    let mut lv = v.horizontal(seg, i)?;
    let mut drift_curv = 0.0;
    if v.f1.is_some() {
        let grad = v.grad.as_ref().ok_or(Error::MissingDerivative("gradient of f1"))?;
        let hess = v.hess.as_ref().ok_or(Error::MissingDerivative("Hessian of f1"))?;
        grad(x, i, &mut ws.grad);
        hess(x, i, &mut ws.hess);
        m.drift(x, i, &mut ws.drift);
        m.diffusion(x, i, &mut ws.diff);
        for k in 0..n {
            lv += ws.grad[k] * ws.drift[k];
        }
        // tr(H A) with A = sigma sigma^T
        let mut trace = 0.0;
        for k in 0..n {
            for l in 0..n {
                let a_lk: f64 = (0..d).map(|c| ws.diff[l * d + c] * ws.diff[k * d + c]).sum();
                trace += ws.hess[k * n + l] * a_lk;
                drift_curv += ws.drift[k] * ws.hess[k * n + l] * ws.drift[l];
            }
        }
        lv += 0.5 * trace;
    }
    m.rates(seg, i, &mut ws.row);
    if !ws.row.is_empty() {
        let vi = v.value(seg, i);
        for (j, q) in ws.row.iter() {
            lv += q * (v.value(seg, j) - vi);
        }
    }
    Ok((lv, drift_curv))
}

/// `LV(phi, i)`: horizontal derivative, drift and diffusion terms on `f1`,
/// and the switching sum over the nonzero entries of row `i` of `Q(phi)`.
pub fn apply_generator<M: SwitchingDiffusion + ?Sized>(
    v: &ProductFunctional,
    m: &M,
    seg: &Segment,
    i: Mode,
) -> Result<f64> {
    if seg.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: seg.dim() });
    }
    let mut ws = Workspace::new(m.dim(), m.brownian_dim());
    Ok(generator_terms(v, m, seg, i, &mut ws)?.0)
}

/// Estimates `E V(X_t, a(t)) - V(phi0, i0) - E int_0^t LV ds`.
///
/// `LV` is integrated with the left-point rule on the simulation grid, and
/// each step also adds `dt^2/2 b^T (Hess f1) b`, the drift-squared term of the
/// Euler increment. With that term the identity is exact in expectation for
/// the simulated chain whenever `f1` is quadratic and `V` has no memory part.
pub fn dynkin_residual<M: SwitchingDiffusion + ?Sized>(
    v: &ProductFunctional,
    m: &M,
    phi0: &Segment,
    i0: Mode,
    t: f64,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<MCEstimate> {
    check_paths(n_paths)?;
    let cfg = SimConfig { horizon: t, ..*cfg };
    cfg.validate(m)?;
    // surface missing derivatives before spawning paths
    apply_generator(v, m, phi0, i0)?;
    let v0 = v.value(phi0, i0);
    let dt = cfg.dt;
    let outcomes = run_paths(0, n_paths, |k| {
        let mut path = Path::new(m, phi0, i0, &cfg, k).expect("validated");
        let mut ws = Workspace::new(m.dim(), m.brownian_dim());
        let mut integral = 0.0;
        for _ in 0..cfg.steps() {
            let (lv, curv) =
                generator_terms(v, m, path.segment(), path.mode(), &mut ws).expect("checked above");
            integral += lv * dt + 0.5 * curv * dt * dt;
            if !path.step() {
                return Outcome::BlownUp;
            }
        }
        Outcome::Value(v.value(path.segment(), path.mode()) - v0 - integral)
    });
    Ok(MCEstimate::from_outcomes(&outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub p: f64,
    pub std_error: f64,
    /// Wilson 95% interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

impl Proportion {
    pub fn new(hits: u64, n: u64) -> Proportion {
        let nf = n.max(1) as f64;
        let p = hits as f64 / nf;
        let z = 1.959_963_984_540_054;
        let z2 = z * z;
        let denom = 1.0 + z2 / nf;
        let centre = (p + z2 / (2.0 * nf)) / denom;
        let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        Proportion {
            p,
            std_error: (p * (1.0 - p) / nf).sqrt(),
            ci_low: (centre - half).max(0.0),
            ci_high: (centre + half).min(1.0),
            n,
        }
    }

    pub fn overlaps(&self, other: &Proportion) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingRow {
    pub radius: f64,
    /// `P(theta <= T ^ tau_H)` with `tau_H = inf{t : |X(t)| <= H}`.
    pub decoupled: Proportion,
}

/// Decoupling probability of `a` and its `Q-hat` shadow per starting radius.
/// Starts are constant segments at `R e_1` in mode `i0`; radius `k` uses
/// path streams `k * n_paths ..`, so rows are independent.
#[allow(clippy::too_many_arguments)]
pub fn coupling_decay<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    q_hat: &Generator,
    radii: &[f64],
    h: f64,
    i0: Mode,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<Vec<CouplingRow>> {
    check_paths(n_paths)?;
    cfg.validate(m)?;
    let n = m.dim();
    radii
        .iter()
        .enumerate()
        .map(|(r_idx, &radius)| {
            let mut x0 = vec![0.0; n];
            x0[0] = radius;
            let phi0 = Segment::constant(&x0, m.delay(), cfg.dt)?;
            let hits = run_paths(r_idx as u64 * n_paths, n_paths, |k| {
                let mut path = Path::new(m, &phi0, i0, cfg, k)
                    .expect("validated")
                    .with_shadow(q_hat.clone());
                let below = |p: &Path<'_, M>| p.state().iter().map(|v| v * v).sum::<f64>().sqrt() <= h;
                if below(&path) {
                    return false;
                }
                for _ in 0..cfg.steps() {
                    if !path.step() {
                        return false;
                    }
                    if path.decoupled_at().is_some() {
                        return true;
                    }
                    if below(&path) {
                        return false;
                    }
                }
                false
            });
            let count = hits.iter().filter(|&&b| b).count() as u64;
            Ok(CouplingRow { radius, decoupled: Proportion::new(count, n_paths) })
        })
        .collect()
}

/// Bins for the `(|X|, mode)` occupation histogram: `edges` split `|X|`
/// (with overflow bin), modes above `k0` share one bin.
#[derive(Debug, Clone, Serialize)]
pub struct Binning {
    pub edges: Vec<f64>,
    pub k0: usize,
}

impl Binning {
    pub fn uniform(max: f64, bins: usize, k0: usize) -> Binning {
        Binning { edges: (1..=bins).map(|k| max * k as f64 / bins as f64).collect(), k0 }
    }

    fn cells(&self) -> usize {
        (self.edges.len() + 1) * (self.k0 + 1)
    }

    fn cell(&self, x: &[f64], i: Mode) -> usize {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let b = self.edges.partition_point(|&e| e <= norm);
        let mode_bin = i.get().min(self.k0 + 1) - 1;
        mode_bin * (self.edges.len() + 1) + b
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationReport {
    pub binning: Binning,
    /// One normalized histogram per start, mode-major.
    pub histograms: Vec<Vec<f64>>,
    /// `(a, b, l1 distance)` for every pair of starts.
    pub distances: Vec<(usize, usize, f64)>,
    pub blown_up: u64,
}

impl OccupationReport {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().fold(0.0, |m, d| m.max(d.2))
    }

    /// `start,mode_bin,norm_upper,mass`.
    pub fn write_csv<W: Write>(&self, w: &mut W, comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "start,mode_bin,norm_upper,mass")?;
        let width = self.binning.edges.len() + 1;
        for (s, hist) in self.histograms.iter().enumerate() {
            for (c, mass) in hist.iter().enumerate() {
                let mode_bin = c / width + 1;
                let upper = self.binning.edges.get(c % width).map_or("inf".to_string(), |e| e.to_string());
                writeln!(w, "{s},{mode_bin},{upper},{mass}")?;
            }
        }
        Ok(())
    }
}

/// Empirical occupation of `(|X|, mode)` after `burn_in`, per start, and the
/// pairwise l1 distances. Every start uses path streams `0..n_paths`.
pub fn occupation_stability<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    starts: &[(Segment, Mode)],
    burn_in: f64,
    binning: &Binning,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<OccupationReport> {
    if starts.len() < 2 {
        return Err(Error::InvalidArgument("at least two starts required".into()));
    }
    check_paths(n_paths)?;
    cfg.validate(m)?;
    if !(burn_in >= 0.0 && burn_in < cfg.horizon) {
        return Err(Error::InvalidArgument("burn-in must lie in [0, T)".into()));
    }
    let cells = binning.cells();
    let mut histograms = Vec::with_capacity(starts.len());
    let mut blown_up = 0;
    for (phi0, i0) in starts {
        let per_path = run_paths(0, n_paths, |k| {
            let mut path = Path::new(m, phi0, *i0, cfg, k).expect("validated");
            let mut counts = vec![0u64; cells];
            for _ in 0..cfg.steps() {
                if !path.step() {
                    return None;
                }
                if path.time() > burn_in {
                    counts[binning.cell(path.state(), path.mode())] += 1;
                }
            }
            Some(counts)
        });
        let mut total = vec![0u64; cells];
        for c in per_path {
            match c {
                Some(c) => total.iter_mut().zip(c).for_each(|(t, v)| *t += v),
                None => blown_up += 1,
            }
        }
        let sum = total.iter().sum::<u64>().max(1) as f64;
        histograms.push(total.into_iter().map(|v| v as f64 / sum).collect::<Vec<f64>>());
    }
    let mut distances = Vec::new();
    for a in 0..histograms.len() {
        for b in a + 1..histograms.len() {
            let d = histograms[a].iter().zip(&histograms[b]).map(|(x, y)| (x - y).abs()).sum();
            distances.push((a, b, d));
        }
    }
    Ok(OccupationReport { binning: binning.clone(), histograms, distances, blown_up })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeRow {
    pub radius: f64,
    /// `P(inf_{t <= T} |X(t)| >= K2)`.
    pub stays_out: Proportion,
}

/// Probability that a path started at `|phi(0)| = R` never enters the ball of
/// radius `k2` before the horizon, per radius.
pub fn escape_probability<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    radii: &[f64],
    k2: f64,
    i0: Mode,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<Vec<EscapeRow>> {
    check_paths(n_paths)?;
    cfg.validate(m)?;
    let n = m.dim();
    radii
        .iter()
        .enumerate()
        .map(|(r_idx, &radius)| {
            let mut x0 = vec![0.0; n];
            x0[0] = radius;
            let phi0 = Segment::constant(&x0, m.delay(), cfg.dt)?;
            let stays = run_paths(r_idx as u64 * n_paths, n_paths, |k| {
                let mut path = Path::new(m, &phi0, i0, cfg, k).expect("validated");
                let outside = |p: &Path<'_, M>| p.state().iter().map(|v| v * v).sum::<f64>().sqrt() >= k2;
                if !outside(&path) {
                    return false;
                }
                for _ in 0..cfg.steps() {
                    if !path.step() {
                        return true;
                    }
                    if !outside(&path) {
                        return false;
                    }
                }
                true
            });
            let count = stays.iter().filter(|&&b| b).count() as u64;
            Ok(EscapeRow { radius, stays_out: Proportion::new(count, n_paths) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub horizon: f64,
    /// `max over paths of sup_{t <= T} |X(t)|^2`.
    pub max_sup_sq: f64,
    pub mean_sup_sq: f64,
    pub blown_up: u64,
}

/// Second-moment growth over a ladder of horizons (same streams for each).
pub fn moment_growth<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    phi0: &Segment,
    i0: Mode,
    horizons: &[f64],
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<Vec<MomentRow>> {
    check_paths(n_paths)?;
    horizons
        .iter()
        .map(|&t| {
            let c = SimConfig { horizon: t, ..*cfg };
            c.validate(m)?;
            let sups = run_paths(0, n_paths, |k| {
                let mut path = Path::new(m, phi0, i0, &c, k).expect("validated");
                let mut sup: f64 = path.state().iter().map(|v| v * v).sum();
                for _ in 0..c.steps() {
                    if !path.step() {
                        return None;
                    }
                    sup = sup.max(path.state().iter().map(|v| v * v).sum());
                }
                Some(sup)
            });
            let ok: Vec<f64> = sups.iter().flatten().copied().collect();
            Ok(MomentRow {
                horizon: t,
                max_sup_sq: ok.iter().fold(0.0, |a, &b| a.max(b)),
                mean_sup_sq: ok.iter().sum::<f64>() / ok.len().max(1) as f64,
                blown_up: (sups.len() - ok.len()) as u64,
            })
        })
        .collect()
}
