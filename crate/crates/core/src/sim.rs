//! Euler-Maruyama for the continuous state and two samplers for the mode:
//! exact thinning against the uniform rate bound `M`, and a first-order
//! per-step Bernoulli scheme used to cross-check it.
//!
//! Path `k` of a run with seed `s` draws its Gaussian increments from ChaCha8
//! stream `2k` and its jump uniforms from stream `2k + 1`, both keyed by `s`,
//! so paths are independent of worker count and scheduling.

use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::Generator;
use crate::error::{Error, Result};
use crate::mode::{Mode, RateRow};
use crate::model::SwitchingDiffusion;
use crate::segment::{grid_intervals, Segment};

/// States beyond this norm are treated as a blow-up.
const BLOW_UP: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Thinning,
    Bernoulli,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scheme> {
        match s {
            "thinning" => Ok(Scheme::Thinning),
            "bernoulli" => Ok(Scheme::Bernoulli),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme `{other}` (thinning|bernoulli)"
            ))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Thinning => "thinning",
            Scheme::Bernoulli => "bernoulli",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Record every `record_stride`-th grid point (the last one always).
    pub record_stride: usize,
}

impl SimConfig {
    /// `dt = r / ceil(r / min(r/64, T/1000))`: the largest step not above
    /// `min(r/64, 1e-3 T)` that divides the delay.
    pub fn default_dt(delay: f64, horizon: f64) -> f64 {
        let target = (delay / 64.0).min(1e-3 * horizon);
        if !(target > 0.0) {
            return delay / 64.0;
        }
        delay / (delay / target).ceil()
    }

    pub fn new(delay: f64, horizon: f64, seed: u64) -> SimConfig {
        SimConfig {
            dt: SimConfig::default_dt(delay, horizon),
            horizon,
            scheme: Scheme::Thinning,
            seed,
            record_stride: 1,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    /// Number of grid steps covering the horizon.
    pub fn steps(&self) -> u64 {
        let r = self.horizon / self.dt;
        let n = r.round();
        if (r - n).abs() < 1e-9 {
            n as u64
        } else {
            r.ceil() as u64
        }
    }

    pub fn validate<M: SwitchingDiffusion + ?Sized>(&self, m: &M) -> Result<()> {
        grid_intervals(m.delay(), self.dt)?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be finite, got {}", self.horizon)));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidArgument("record stride must be positive".into()));
        }
        if self.scheme == Scheme::Bernoulli && self.dt * m.rate_bound() >= 0.5 {
            return Err(Error::StepTooCoarse(self.dt * m.rate_bound()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jump {
    pub t: f64,
    pub from: Mode,
    pub to: Mode,
}

/// Target of a thinning event under the basic coupling of `q` (row `k` of
/// `Q(phi)`) and `q_hat` (row `l` of `Q-hat`): both move to `j` at rate
/// `q_kj ^ q_hat_lj`, only the first at `(q_kj - q_hat_lj)+`, only the second
/// at `(q_hat_lj - q_kj)+`. Diagonal entries count as zero. `None` when `u`
/// falls past the total (a rejected event).
pub fn coupled_select(q: &RateRow, q_hat: &RateRow, k: Mode, l: Mode, u: f64) -> Option<(Mode, Mode)> {
    let mut acc = 0.0;
    for (j, a) in q.iter() {
        let b = q_hat.rate_to(j);
        acc += a.min(b);
        if u < acc {
            return Some((j, j));
        }
        acc += (a - b).max(0.0);
        if u < acc {
            return Some((j, l));
        }
        acc += (b - a).max(0.0);
        if u < acc {
            return Some((k, j));
        }
    }
    for (j, b) in q_hat.iter() {
        if q.rate_to(j) == 0.0 {
            acc += b;
            if u < acc {
                return Some((k, j));
            }
        }
    }
    None
}

fn streams(seed: u64, k: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut brown = ChaCha8Rng::seed_from_u64(seed);
    brown.set_stream(2 * k);
    let mut jump = ChaCha8Rng::seed_from_u64(seed);
    jump.set_stream(2 * k + 1);
    (brown, jump)
}

struct Shadow {
    generator: Generator,
    mode: Mode,
    row: RateRow,
    decoupled_at: Option<f64>,
}

/// One path, advanced a grid step at a time. Estimators drive this directly
/// so they can stop on their own criteria without storing the trajectory.
pub struct Path<'a, M: ?Sized> {
    model: &'a M,
    cfg: SimConfig,
    seg: Segment,
    x: Vec<f64>,
    mode: Mode,
    steps: u64,
    brown: ChaCha8Rng,
    jump: ChaCha8Rng,
    event_rate: f64,
    next_event: f64,
    drift: Vec<f64>,
    diff: Vec<f64>,
    xi: Vec<f64>,
    row: RateRow,
    jumps: Vec<Jump>,
    shadow: Option<Shadow>,
    blown_up: bool,
}

impl<'a, M: SwitchingDiffusion + ?Sized> Path<'a, M> {
    /// Path number `k` of the run keyed by `cfg.seed`.
    pub fn new(model: &'a M, phi0: &Segment, i0: Mode, cfg: &SimConfig, k: u64) -> Result<Self> {
        cfg.validate(model)?;
        if phi0.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: phi0.dim() });
        }
        if (phi0.delay() - model.delay()).abs() > 1e-9 * model.delay()
            || (phi0.step() - cfg.dt).abs() > 1e-9 * cfg.dt
        {
            return Err(Error::InvalidArgument(format!(
                "initial segment grid (r = {}, dt = {}) does not match the model/config (r = {}, dt = {})",
                phi0.delay(),
                phi0.step(),
                model.delay(),
                cfg.dt
            )));
        }
        let (brown, jump) = streams(cfg.seed, k);
        let (n, d) = (model.dim(), model.brownian_dim());
        let mut path = Path {
            model,
            cfg: *cfg,
            seg: phi0.clone(),
            x: phi0.newest().to_vec(),
            mode: i0,
            steps: 0,
            brown,
            jump,
            event_rate: model.rate_bound(),
            next_event: f64::INFINITY,
            drift: vec![0.0; n],
            diff: vec![0.0; n * d],
            xi: vec![0.0; d],
            row: RateRow::new(),
            jumps: Vec::new(),
            shadow: None,
            blown_up: false,
        };
        path.blown_up = !path.x.iter().all(|v| v.is_finite());
        path.schedule_from(0.0);
        Ok(path)
    }

    /// Constant initial history at `x0`.
    pub fn from_point(model: &'a M, x0: &[f64], i0: Mode, cfg: &SimConfig, k: u64) -> Result<Self> {
        let phi0 = Segment::constant(x0, model.delay(), cfg.dt)?;
        Path::new(model, &phi0, i0, cfg, k)
    }

    /// Runs a second mode process driven by `q_hat`, coupled to the first
    /// one; both start at the current mode.
    pub fn with_shadow(mut self, q_hat: Generator) -> Self {
        self.event_rate = self.model.rate_bound() + q_hat.rate_bound();
        self.shadow = Some(Shadow { generator: q_hat, mode: self.mode, row: RateRow::new(), decoupled_at: None });
        self.schedule_from(self.time());
        self
    }

    fn schedule_from(&mut self, t: f64) {
        self.next_event = if self.cfg.scheme == Scheme::Thinning && self.event_rate > 0.0 {
            let e: f64 = self.jump.sample(Exp1);
            t + e / self.event_rate
        } else {
            f64::INFINITY
        };
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.cfg.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn segment(&self) -> &Segment {
        &self.seg
    }

    pub fn blown_up(&self) -> bool {
        self.blown_up
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Jumps of the main mode during the last call to [`Path::step`].
    pub fn last_jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn shadow_mode(&self) -> Option<Mode> {
        self.shadow.as_ref().map(|s| s.mode)
    }

    /// First time the coupled modes differed.
    pub fn decoupled_at(&self) -> Option<f64> {
        self.shadow.as_ref().and_then(|s| s.decoupled_at)
    }

    fn euler(&mut self, h: f64) {
        if h <= 0.0 || self.blown_up {
            return;
        }
        let (n, d) = (self.x.len(), self.xi.len());
        self.model.drift(&self.x, self.mode, &mut self.drift);
        self.model.diffusion(&self.x, self.mode, &mut self.diff);
        let sq = h.sqrt();
        for z in self.xi.iter_mut() {
            *z = self.brown.sample::<f64, _>(StandardNormal) * sq;
        }
        for r in 0..n {
            let mut noise = 0.0;
            for c in 0..d {
                noise += self.diff[r * d + c] * self.xi[c];
            }
            self.x[r] += self.drift[r] * h + noise;
        }
        self.model.project(&mut self.x);
        let norm_sq: f64 = self.x.iter().map(|v| v * v).sum();
        if !(norm_sq.is_finite() && norm_sq < BLOW_UP * BLOW_UP) {
            self.blown_up = true;
        }
    }

    /// Applies a jump event at time `t`; `u` is uniform on `[0, scale)`.
    fn event(&mut self, t: f64, u: f64) {
        self.model.rates(&self.seg, self.mode, &mut self.row);
        let from = self.mode;
        match &mut self.shadow {
            None => {
                if let Some(to) = self.row.select(u) {
                    self.mode = to;
                }
            }
            Some(sh) => {
                sh.generator.row(sh.mode, &mut sh.row);
                if let Some((a, b)) = coupled_select(&self.row, &sh.row, self.mode, sh.mode, u) {
                    self.mode = a;
                    sh.mode = b;
                    if a != b && sh.decoupled_at.is_none() {
                        sh.decoupled_at = Some(t);
                    }
                }
            }
        }
        if self.mode != from {
            self.jumps.push(Jump { t, from, to: self.mode });
        }
    }

    /// Advances one grid step. Returns `false` once the path has blown up.
    pub fn step(&mut self) -> bool {
        self.jumps.clear();
        if self.blown_up {
            return false;
        }
        let dt = self.cfg.dt;
        let t0 = self.time();
        let t1 = (self.steps + 1) as f64 * dt;
        match self.cfg.scheme {
            Scheme::Thinning => {
                let mut cur = t0;
                while self.next_event < t1 {
                    let te = self.next_event;
                    self.euler(te - cur);
                    cur = te;
                    let u = self.jump.random::<f64>() * self.event_rate;
                    self.event(te, u);
                    self.schedule_from(te);
                }
                self.euler(t1 - cur);
            }
            Scheme::Bernoulli => {
                // rates read the segment at t0; the jump lands at t1
                let u = self.jump.random::<f64>() / dt;
                self.euler(dt);
                self.event(t1, u);
            }
        }
        self.steps += 1;
        if !self.blown_up {
            self.seg.push(&self.x).expect("dimension fixed at construction");
        }
        !self.blown_up
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major, `dim` values per recorded time.
    pub states: Vec<f64>,
    pub modes: Vec<Mode>,
    pub jumps: Vec<Jump>,
    #[serde(skip)]
    pub terminal: Option<Segment>,
    pub blown_up: bool,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// `t,x1..xn,mode` with an optional leading comment line.
    pub fn write_csv<W: Write>(&self, w: &mut W, comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        write!(w, "t")?;
        for c in 1..=self.dim {
            write!(w, ",x{c}")?;
        }
        writeln!(w, ",mode")?;
        for k in 0..self.len() {
            write!(w, "{}", self.times[k])?;
            for v in self.state(k) {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", self.modes[k])?;
        }
        Ok(())
    }

    /// `t,from,to`.
    pub fn write_jumps_csv<W: Write>(&self, w: &mut W, comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "t,from,to")?;
        for j in &self.jumps {
            writeln!(w, "{},{},{}", j.t, j.from, j.to)?;
        }
        Ok(())
    }

    /// Fraction of recorded grid points spent in each mode `1..=k`.
    pub fn occupation(&self, k: usize) -> Vec<f64> {
        let mut counts = vec![0usize; k];
        for m in &self.modes {
            if m.get() <= k {
                counts[m.index()] += 1;
            }
        }
        let total = self.modes.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / total).collect()
    }
}

struct Recorder {
    stride: u64,
    last: u64,
    rec: TrajectoryRecord,
}

impl Recorder {
    fn new(dim: usize, cfg: &SimConfig) -> Recorder {
        Recorder {
            stride: cfg.record_stride as u64,
            last: cfg.steps(),
            rec: TrajectoryRecord {
                dim,
                times: Vec::new(),
                states: Vec::new(),
                modes: Vec::new(),
                jumps: Vec::new(),
                terminal: None,
                blown_up: false,
            },
        }
    }

    fn observe<M: SwitchingDiffusion + ?Sized>(&mut self, p: &Path<'_, M>) {
        self.rec.jumps.extend_from_slice(p.last_jumps());
        let k = p.steps();
        if k.is_multiple_of(self.stride) || k == self.last || p.blown_up() {
            self.rec.times.push(p.time());
            self.rec.states.extend_from_slice(p.state());
            self.rec.modes.push(p.mode());
        }
    }
}

fn drive<M: SwitchingDiffusion + ?Sized>(
    path: &mut Path<'_, M>,
    mut on_step: impl FnMut(&Path<'_, M>),
) {
    let n = path.config().steps();
    on_step(path);
    for _ in 0..n {
        let alive = path.step();
        on_step(path);
        if !alive {
            break;
        }
    }
}

fn simulate_stream<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    phi0: &Segment,
    i0: Mode,
    cfg: &SimConfig,
    k: u64,
) -> Result<TrajectoryRecord> {
    let mut path = Path::new(m, phi0, i0, cfg, k)?;
    let mut rec = Recorder::new(m.dim(), cfg);
    drive(&mut path, |p| rec.observe(p));
    let mut out = rec.rec;
    out.blown_up = path.blown_up();
    out.terminal = Some(path.segment().clone());
    Ok(out)
}

/// One trajectory on stream `(seed, 0)`.
pub fn simulate<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    phi0: &Segment,
    i0: Mode,
    cfg: &SimConfig,
) -> Result<TrajectoryRecord> {
    simulate_stream(m, phi0, i0, cfg, 0)
}

/// Maps `f` over path indices `first..first + n` in parallel, returning results
/// in index order.
pub fn run_paths<T: Send>(first: u64, n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (first..first + n).into_par_iter().map(f).collect()
}

/// Paths `0..n_paths`, each on its own stream pair.
pub fn simulate_ensemble<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    phi0: &Segment,
    i0: Mode,
    cfg: &SimConfig,
    n_paths: u64,
) -> Result<Vec<TrajectoryRecord>> {
    simulate_range(m, phi0, i0, cfg, 0, n_paths)
}

/// Paths `first..first + n`; merging disjoint ranges reproduces a full run.
pub fn simulate_range<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    phi0: &Segment,
    i0: Mode,
    cfg: &SimConfig,
    first: u64,
    n: u64,
) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate(m)?;
    run_paths(first, n, |k| simulate_stream(m, phi0, i0, cfg, k)).into_iter().collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledRecord {
    pub trajectory: TrajectoryRecord,
    /// Mode of the `Q-hat` process at each recorded time.
    pub shadow_modes: Vec<Mode>,
    /// First time the two modes differed; `None` if they never did before `T`.
    pub decouple_time: Option<f64>,
}

/// Simulates `(X, a)` together with a mode `a-hat` driven by `q_hat` under
/// the basic coupling.
pub fn simulate_coupled<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    q_hat: &Generator,
    phi0: &Segment,
    i0: Mode,
    cfg: &SimConfig,
    k: u64,
) -> Result<CoupledRecord> {
    let mut path = Path::new(m, phi0, i0, cfg, k)?.with_shadow(q_hat.clone());
    let mut rec = Recorder::new(m.dim(), cfg);
    let mut shadow_modes = Vec::new();
    drive(&mut path, |p| {
        let before = rec.rec.times.len();
        rec.observe(p);
        if rec.rec.times.len() > before {
            shadow_modes.push(p.shadow_mode().expect("shadow present"));
        }
    });
    let mut trajectory = rec.rec;
    trajectory.blown_up = path.blown_up();
    trajectory.terminal = Some(path.segment().clone());
    Ok(CoupledRecord { trajectory, shadow_modes, decouple_time: path.decoupled_at() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode::PerMode;
    use crate::model::{scalar_table, LinearModel, RateLaw};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn frozen(drift: f64, sigma: f64, q: Generator) -> LinearModel {
        LinearModel::frozen(
            "t",
            0.01,
            scalar_table(&PerMode::constant(drift)),
            PerMode::constant(vec![DMatrix::from_element(1, 1, sigma)]),
            q,
        )
        .unwrap()
    }

    fn no_jumps() -> Generator {
        Generator::two_state(0.0, 0.0).unwrap()
    }

    #[test]
    fn default_dt_divides_delay() {
        assert_eq!(SimConfig::default_dt(1.0, 1e4), 1.0 / 64.0);
        let dt = SimConfig::default_dt(1.0, 10.0);
        assert!(dt <= 0.01 + 1e-15);
        assert!(grid_intervals(1.0, dt).is_ok());
    }

    #[test]
    fn nothing_moves() {
        let m = frozen(0.0, 0.0, no_jumps());
        let cfg = SimConfig::new(0.01, 1.0, 3);
        let phi = Segment::constant(&[2.5], 0.01, cfg.dt).unwrap();
        let rec = simulate(&m, &phi, Mode::of(2), &cfg).unwrap();
        assert!(rec.states.iter().all(|&x| x == 2.5));
        assert!(rec.modes.iter().all(|&i| i == Mode::of(2)));
        assert!(rec.jumps.is_empty());
        assert_eq!(rec.len() as u64, cfg.steps() + 1);
    }

    #[test]
    fn decay_matches_explicit_euler() {
        let m = frozen(-1.0, 0.0, no_jumps());
        for dt in [1e-2, 1e-3] {
            let cfg = SimConfig::new(0.01, 1.0, 0).with_dt(dt);
            let phi = Segment::constant(&[std::f64::consts::E], 0.01, dt).unwrap();
            let rec = simulate(&m, &phi, Mode::of(1), &cfg).unwrap();
            let last = rec.state(rec.len() - 1)[0];
            let mut euler = std::f64::consts::E;
            for _ in 0..cfg.steps() {
                euler += -euler * dt;
            }
            assert!((last - euler).abs() < 1e-12);
            assert!((last - 1.0).abs() < dt * 2.0);
        }
    }

    #[test]
    fn bernoulli_rejects_coarse_step() {
        let m = frozen(0.0, 0.0, Generator::two_state(100.0, 100.0).unwrap());
        let cfg = SimConfig::new(0.01, 1.0, 0).with_dt(0.01).with_scheme(Scheme::Bernoulli);
        assert!(matches!(cfg.validate(&m), Err(Error::StepTooCoarse(_))));
    }

    #[test]
    fn segment_grid_must_match() {
        let m = frozen(0.0, 0.0, no_jumps());
        let cfg = SimConfig::new(0.01, 1.0, 0).with_dt(1e-3);
        let phi = Segment::constant(&[1.0], 0.01, 5e-3).unwrap();
        assert!(Path::new(&m, &phi, Mode::of(1), &cfg, 0).is_err());
    }

    #[test]
    fn two_state_occupation() {
        let (a, b) = (1.0, 3.0);
        let m = frozen(0.0, 0.0, Generator::two_state(a, b).unwrap());
        for scheme in [Scheme::Thinning, Scheme::Bernoulli] {
            let cfg = SimConfig::new(0.01, 2000.0, 11).with_dt(0.01).with_scheme(scheme);
            let phi = Segment::constant(&[0.0], 0.01, 0.01).unwrap();
            let rec = simulate(&m, &phi, Mode::of(1), &cfg).unwrap();
            let occ = rec.occupation(2)[0];
            assert!((occ - b / (a + b)).abs() < 0.03, "{scheme}: {occ}");
            for j in &rec.jumps {
                assert_ne!(j.from, j.to);
            }
        }
    }

    #[test]
    fn ensemble_is_deterministic_and_splittable() {
        let m = frozen(-0.5, 0.3, Generator::two_state(1.0, 2.0).unwrap());
        let cfg = SimConfig::new(0.01, 2.0, 42);
        let phi = Segment::constant(&[1.0], 0.01, cfg.dt).unwrap();
        let full = simulate_ensemble(&m, &phi, Mode::of(1), &cfg, 6).unwrap();
        let again = simulate_ensemble(&m, &phi, Mode::of(1), &cfg, 6).unwrap();
        let head = simulate_range(&m, &phi, Mode::of(1), &cfg, 0, 2).unwrap();
        let tail = simulate_range(&m, &phi, Mode::of(1), &cfg, 2, 4).unwrap();
        let single = simulate(&m, &phi, Mode::of(1), &cfg).unwrap();
        for (k, r) in full.iter().enumerate() {
            assert_eq!(r.states, again[k].states);
            let split = if k < 2 { &head[k] } else { &tail[k - 2] };
            assert_eq!(r.states, split.states);
            assert_eq!(r.modes, split.modes);
        }
        assert_eq!(single.states, full[0].states);
        assert_ne!(full[0].states, full[1].states);
    }

    #[test]
    fn frozen_rates_never_decouple() {
        let q = Generator::reset_two_or_advance();
        let m = LinearModel::frozen(
            "f",
            0.01,
            scalar_table(&PerMode::constant(-1.0)),
            PerMode::constant(vec![DMatrix::zeros(1, 1)]),
            q.clone(),
        )
        .unwrap();
        let cfg = SimConfig::new(0.01, 20.0, 5);
        let phi = Segment::constant(&[1.0], 0.01, cfg.dt).unwrap();
        let rec = simulate_coupled(&m, &q, &phi, Mode::of(1), &cfg, 0).unwrap();
        assert!(rec.decouple_time.is_none());
        assert_eq!(rec.trajectory.modes, rec.shadow_modes);
        assert!(!rec.trajectory.jumps.is_empty());
    }

    #[test]
    fn silent_chain_decouples_exponentially() {
        // Q = 0 against Q-hat with total rate 2 out of mode 1
        let q_hat = Generator::two_state(2.0, 1.0).unwrap();
        let silent = Generator::two_state(0.0, 0.0).unwrap();
        let m = LinearModel::new(
            "s",
            0.01,
            scalar_table(&PerMode::constant(0.0)),
            PerMode::constant(vec![DMatrix::zeros(1, 1)]),
            RateLaw::Frozen(silent),
            0.0,
        )
        .unwrap();
        let cfg = SimConfig::new(0.01, 10.0, 9).with_dt(0.01).with_stride(1000);
        let phi = Segment::constant(&[0.0], 0.01, 0.01).unwrap();
        let times: Vec<f64> = run_paths(0, 2000, |k| {
            simulate_coupled(&m, &q_hat, &phi, Mode::of(1), &cfg, k)
                .unwrap()
                .decouple_time
                .unwrap_or(f64::INFINITY)
        });
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        // exponential(2): mean 1/2, sd of the mean ~ 0.5/sqrt(2000)
        assert!((mean - 0.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn coupled_select_rates() {
        let mut q = RateRow::new();
        q.add(Mode::of(2), 1.0);
        q.add(Mode::of(3), 0.5);
        let mut qh = RateRow::new();
        qh.add(Mode::of(2), 0.25);
        qh.add(Mode::of(4), 2.0);
        let k = Mode::of(1);
        let pick = |u| coupled_select(&q, &qh, k, k, u);
        assert_eq!(pick(0.1), Some((Mode::of(2), Mode::of(2))));
        assert_eq!(pick(0.5), Some((Mode::of(2), k)));
        assert_eq!(pick(1.2), Some((Mode::of(3), k)));
        assert_eq!(pick(2.0), Some((k, Mode::of(4))));
        assert_eq!(pick(3.6), None);
    }

    #[test]
    fn blow_up_is_flagged() {
        let m = frozen(1e4, 0.0, no_jumps());
        let cfg = SimConfig::new(0.01, 1.0, 0).with_dt(0.01);
        let phi = Segment::constant(&[1.0], 0.01, 0.01).unwrap();
        let rec = simulate(&m, &phi, Mode::of(1), &cfg).unwrap();
        assert!(rec.blown_up);
        assert!(rec.len() < 101);
    }

    #[test]
    fn csv_layout() {
        let m = frozen(0.0, 0.0, no_jumps());
        let cfg = SimConfig::new(0.01, 0.02, 0).with_dt(0.01);
        let phi = Segment::constant(&[1.0], 0.01, 0.01).unwrap();
        let rec = simulate(&m, &phi, Mode::of(1), &cfg).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf, Some("seed=0")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# seed=0\nt,x1,mode\n0,1,1\n0.01,1,1\n0.02,1,1\n");
    }

    #[test]
    fn path_rates_see_segment() {
        // jump 1 -> 2 only while the oldest sample is above 1
        let rates = RateLaw::Path(Arc::new(|seg: &Segment, i: Mode, row: &mut RateRow| {
            row.clear();
            if i == Mode::of(1) && seg.oldest()[0] > 1.0 {
                row.add(Mode::of(2), 50.0);
            }
        }));
        let m = LinearModel::new(
            "p",
            0.5,
            scalar_table(&PerMode::constant(1.0)),
            PerMode::constant(vec![DMatrix::zeros(1, 1)]),
            rates,
            50.0,
        )
        .unwrap();
        let cfg = SimConfig::new(0.5, 2.0, 1).with_dt(0.01);
        let phi = Segment::constant(&[0.5], 0.5, 0.01).unwrap();
        let rec = simulate(&m, &phi, Mode::of(1), &cfg).unwrap();
        // x = 0.5 e^t exceeds 1 at t = ln 2; the oldest sample follows r later
        let first = rec.jumps.first().expect("a jump").t;
        assert!(first > std::f64::consts::LN_2 + 0.5 - 0.02, "{first}");
    }
}
