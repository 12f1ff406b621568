//! Command-line front end. Every report carries the tool version, the seed and
//! a SHA-256 of the model file plus the resolved arguments, so identical
//! invocations produce byte-identical files regardless of `--threads`.
//!
//! Exit codes: 0 success, 1 valid but inconclusive, 2 usage or config error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::certify::{
    certify, certify_stabilization, model_assumptions, search_gain, CertifySettings, Form,
    GainBudget, TailMass, DEFAULT_MARGIN,
};
use crate::chain::{convergence_sweep, geometric_tail, stationary, truncate, Generator, GeneratorFile};
use crate::error::{Error, Result};
use crate::mode::Mode;
use crate::model::{load_model_config, ModelConfig, RegistryEntry, SwitchingDiffusion};
use crate::segment::Segment;
use crate::sim::{simulate_range, Scheme, SimConfig};
use crate::verify::{
    coupling_decay, dynkin_residual, estimate_hitting_time, estimate_mode_descent,
    occupation_stability, Binning, ProductFunctional,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser, Serialize)]
#[command(name = "switchdiff", version, about = "Switching diffusions with past-dependent switching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Output directory; reports go to stdout when absent.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Simulate trajectories and write them as CSV.
    Simulate(SimulateArgs),
    /// Evaluate the recurrence criterion on a truncation of Q-hat.
    Certify(CertifyArgs),
    /// Stationary distribution of a truncated generator.
    Stationary(StationaryArgs),
    /// Search a feedback gain that certifies the closed loop.
    Stabilize(StabilizeArgs),
    /// Monte Carlo corroboration.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Dynkin residual of a path functional.
    Dynkin(DynkinArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArg {
    /// Model config (JSON).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    /// Horizon.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Time step; must divide the model delay. Defaults to min(r/64, T/1000) rounded to divide r.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "thinning")]
    pub scheme: Scheme,
    /// Initial state, comma separated (held constant over the initial segment).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Initial mode.
    #[arg(long, default_value_t = 1)]
    pub i0: usize,
}

impl RunArgs {
    fn sim_config(&self, m: &dyn SwitchingDiffusion, default_horizon: f64) -> Result<SimConfig> {
        let horizon = self.horizon.unwrap_or(default_horizon);
        let mut cfg = SimConfig::new(m.delay(), horizon, self.seed).with_scheme(self.scheme);
        if let Some(dt) = self.dt {
            cfg = cfg.with_dt(dt);
        }
        cfg.validate(m)?;
        Ok(cfg)
    }

    fn start(&self, m: &dyn SwitchingDiffusion, cfg: &SimConfig, default: f64) -> Result<(Segment, Mode)> {
        let x0 = self.x0.clone().unwrap_or_else(|| vec![default; m.dim()]);
        if x0.len() != m.dim() {
            return Err(Error::DimensionMismatch { expected: m.dim(), got: x0.len() });
        }
        Ok((Segment::constant(&x0, m.delay(), cfg.dt)?, mode_arg(self.i0)?))
    }
}

fn mode_arg(i: usize) -> Result<Mode> {
    Mode::new(i).ok_or_else(|| Error::InvalidArgument("modes are numbered from 1".into()))
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 1)]
    pub paths: u64,
    /// Record every k-th grid point.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Truncation level (defaults to the config's hint, else 30).
    #[arg(long = "N")]
    pub level: Option<usize>,
    #[arg(long, default_value = "thm37")]
    pub form: Form,
    /// Known bound on the stationary mass beyond N; extrapolated when absent.
    #[arg(long)]
    pub tail_mass: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    /// Skip the sampled assumption checks.
    #[arg(long)]
    pub no_checks: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct StationaryArgs {
    /// Model config whose Q-hat is used.
    #[arg(long, conflicts_with = "generator", required_unless_present = "generator")]
    pub model: Option<PathBuf>,
    /// Generator file: {"family": ...} or {"triplets": [{i, j, rate}, ...]}.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    #[arg(long = "N")]
    pub level: Option<usize>,
    /// Extra truncation levels for a convergence sweep.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
}

#[derive(Debug, Args, Serialize)]
pub struct StabilizeArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long = "N")]
    pub level: Option<usize>,
    #[arg(long, default_value = "thm37")]
    pub form: Form,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub g_min: f64,
    #[arg(long, default_value_t = 1e3)]
    pub g_max: f64,
    #[arg(long, default_value_t = 101)]
    pub g_steps: usize,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum VerifyCommand {
    /// Mean time to reach {||X_t|| <= H} x {1..k0}.
    Hitting(HittingArgs),
    /// Mean time for the mode to descend to {1..k0}.
    Descent(DescentArgs),
    /// Decoupling probability from Q-hat per starting radius.
    Coupling(CouplingArgs),
    /// Start independence of the (|X|, mode) occupation measure.
    Occupation(OccupationArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct HittingArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long = "H", default_value_t = 1.0)]
    pub h: f64,
    #[arg(long, default_value_t = 2)]
    pub k0: usize,
    #[arg(long, default_value_t = 1000)]
    pub paths: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct DescentArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 2)]
    pub k0: usize,
    #[arg(long, default_value_t = 1000)]
    pub paths: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct CouplingArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    pub radii: Vec<f64>,
    #[arg(long = "H", default_value_t = 1.0)]
    pub h: f64,
    #[arg(long, default_value_t = 1000)]
    pub paths: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct OccupationArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub run: RunArgs,
    /// Starting states (comma separated coordinates); repeat for each start.
    #[arg(long = "start", num_args = 1, allow_negative_numbers = true)]
    pub starts: Vec<String>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub max_norm: f64,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 3)]
    pub k0: usize,
    #[arg(long, default_value_t = 200)]
    pub paths: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    /// V = |x|^2
    Squared,
    /// V = 1
    Constant,
    /// V(phi, i) = i
    ModeIndex,
}

#[derive(Debug, Args, Serialize)]
pub struct DynkinArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value = "squared")]
    pub functional: Functional,
    #[arg(long, default_value_t = 1000)]
    pub paths: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
}

impl Meta {
    fn comment(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "{} {} {} seed={} config_sha256={}",
            self.tool, self.version, self.command, seed, self.config_sha256
        )
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: T,
}

/// Whether a valid run reached a positive conclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Inconclusive,
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn config_hash(input: &[u8], cli: &Cli) -> Result<String> {
    let mut h = Sha256::new();
    h.update(input);
    h.update([0u8]);
    h.update(serde_json::to_vec(&cli.command)?);
    Ok(hex(&h.finalize()))
}

struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    fn new(dir: Option<PathBuf>) -> Result<Output> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|source| Error::Io { path: d.clone(), source })?;
        }
        Ok(Output { dir })
    }

    fn write_file(&self, name: &str, bytes: &[u8]) -> Result<()> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                fs::write(&path, bytes).map_err(|source| Error::Io { path, source })
            }
            None => {
                let mut out = io::stdout().lock();
                match out.write_all(bytes).and_then(|_| out.flush()) {
                    Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                    r => r.map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source }),
                }
            }
        }
    }

    fn json<T: Serialize>(&self, name: &str, meta: &Meta, body: T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(&Report { meta, body })?;
        bytes.push(b'\n');
        self.write_file(name, &bytes)
    }
}

fn load(path: &FsPath) -> Result<(ModelConfig, RegistryEntry, Vec<u8>)> {
    let (cfg, bytes) = load_model_config(path)?;
    let entry = cfg.build()?;
    Ok((cfg, entry, bytes))
}

/// Parses `args` (including the program name) and runs the command; returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(Status::Ok) => 0,
        Ok(Status::Inconclusive) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let out = Output::new(cli.out.clone())?;
    pool.install(|| dispatch(cli, &out))
}

fn dispatch(cli: &Cli, out: &Output) -> Result<Status> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(cli, a, out),
        Command::Certify(a) => cmd_certify(cli, a, out),
        Command::Stationary(a) => cmd_stationary(cli, a, out),
        Command::Stabilize(a) => cmd_stabilize(cli, a, out),
        Command::Verify(v) => match v {
            VerifyCommand::Hitting(a) => cmd_hitting(cli, a, out),
            VerifyCommand::Descent(a) => cmd_descent(cli, a, out),
            VerifyCommand::Coupling(a) => cmd_coupling(cli, a, out),
            VerifyCommand::Occupation(a) => cmd_occupation(cli, a, out),
        },
        Command::Dynkin(a) => cmd_dynkin(cli, a, out),
    }
}

fn meta(cli: &Cli, command: &str, seed: Option<u64>, input: &[u8]) -> Result<Meta> {
    Ok(Meta {
        tool: "switchdiff",
        version: VERSION,
        command: command.to_string(),
        seed,
        config_sha256: config_hash(input, cli)?,
    })
}

#[derive(Serialize)]
struct PathSummary {
    path: u64,
    final_time: f64,
    final_state: Vec<f64>,
    final_mode: Mode,
    jumps: usize,
    blown_up: bool,
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs, out: &Output) -> Result<Status> {
    let (_, entry, bytes) = load(&a.model.model)?;
    let m = entry.model.as_ref();
    let cfg = a.run.sim_config(m, 10.0)?.with_stride(a.stride);
    cfg.validate(m)?;
    let (phi0, i0) = a.run.start(m, &cfg, 1.0)?;
    if a.paths == 0 {
        return Err(Error::InvalidArgument("--paths must be positive".into()));
    }
    let meta = meta(cli, "simulate", Some(a.run.seed), &bytes)?;
    let records = simulate_range(m, &phi0, i0, &cfg, 0, a.paths)?;
    let comment = meta.comment();
    let csv_name = |k: usize, stem: &str| {
        if a.paths == 1 {
            format!("{stem}.csv")
        } else {
            format!("{stem}_{k:04}.csv")
        }
    };
    if out.dir.is_none() && a.paths == 1 {
        let mut buf = Vec::new();
        records[0]
            .write_csv(&mut buf, Some(&comment))
            .map_err(|source| Error::Io { path: "<buffer>".into(), source })?;
        out.write_file("", &buf)?;
        return Ok(Status::Ok);
    }
    if out.dir.is_some() {
        for (k, rec) in records.iter().enumerate() {
            let mut buf = Vec::new();
            let mut jumps = Vec::new();
            rec.write_csv(&mut buf, Some(&comment))
                .and_then(|_| rec.write_jumps_csv(&mut jumps, Some(&comment)))
                .map_err(|source| Error::Io { path: "<buffer>".into(), source })?;
            out.write_file(&csv_name(k, "trajectory"), &buf)?;
            out.write_file(&csv_name(k, "jumps"), &jumps)?;
        }
    }
    let summary: Vec<PathSummary> = records
        .iter()
        .enumerate()
        .map(|(k, r)| PathSummary {
            path: k as u64,
            final_time: *r.times.last().unwrap_or(&0.0),
            final_state: r.state(r.len() - 1).to_vec(),
            final_mode: *r.modes.last().expect("at least the initial point"),
            jumps: r.jumps.len(),
            blown_up: r.blown_up,
        })
        .collect();
    #[derive(Serialize)]
    struct Body<'a> {
        model: &'a str,
        sim: SimConfig,
        paths: Vec<PathSummary>,
    }
    out.json("summary.json", &meta, Body { model: m.name(), sim: cfg, paths: summary })?;
    Ok(Status::Ok)
}

fn cmd_certify(cli: &Cli, a: &CertifyArgs, out: &Output) -> Result<Status> {
    let (cfg, entry, bytes) = load(&a.model.model)?;
    let settings = CertifySettings {
        level: a.level.unwrap_or_else(|| cfg.truncation(crate::certify::DEFAULT_LEVEL)),
        tail: a.tail_mass.map_or(TailMass::Auto, TailMass::Supplied),
        form: a.form,
        margin: a.margin,
    };
    let mut cert = match &entry.control {
        Some(c) => certify_stabilization(&c.open_loop, &c.plan, &settings)?,
        None => certify(&entry.linearization, &settings)?,
    };
    if !a.no_checks {
        let flags = model_assumptions(entry.model.as_ref(), &entry.linearization, settings.level)?;
        cert = cert.with_assumptions(flags);
    }
    let meta = meta(cli, "certify", None, &bytes)?;
    #[derive(Serialize)]
    struct Body<'a> {
        model: &'a str,
        certificate: &'a crate::certify::Certificate,
    }
    out.json("certificate.json", &meta, Body { model: &cfg.name, certificate: &cert })?;
    Ok(if cert.is_certified() { Status::Ok } else { Status::Inconclusive })
}

fn cmd_stationary(cli: &Cli, a: &StationaryArgs, out: &Output) -> Result<Status> {
    let (generator, bytes, hint): (Generator, Vec<u8>, Option<usize>) = match (&a.model, &a.generator) {
        (Some(p), _) => {
            let (cfg, entry, bytes) = load(p)?;
            (entry.linearization.qhat, bytes, cfg.truncation_hint)
        }
        (None, Some(p)) => {
            let bytes = fs::read(p).map_err(|source| Error::Io { path: p.clone(), source })?;
            let file: GeneratorFile = serde_json::from_slice(&bytes)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            (file.build()?, bytes, None)
        }
        (None, None) => return Err(Error::InvalidArgument("--model or --generator required".into())),
    };
    let level = a.level.or(hint).unwrap_or(crate::certify::DEFAULT_LEVEL);
    let tg = truncate(&generator, level)?;
    let dist = stationary(&tg)?;
    let sweep = match &a.sweep {
        Some(levels) => Some(convergence_sweep(&generator, levels)?),
        None => None,
    };
    let tail = geometric_tail(&dist.nu).map(|(ratio, mass)| TailEstimate { ratio, mass });
    #[derive(Serialize)]
    struct TailEstimate {
        ratio: f64,
        mass: f64,
    }
    #[derive(Serialize)]
    struct Body<'a> {
        generator: &'a str,
        level: usize,
        lump_policy: &'a str,
        exact: bool,
        nu: &'a [f64],
        residual: f64,
        geometric_tail: Option<TailEstimate>,
        #[serde(skip_serializing_if = "Option::is_none")]
        sweep: Option<Vec<crate::chain::SweepRow>>,
    }
    let meta = meta(cli, "stationary", None, &bytes)?;
    out.json(
        "stationary.json",
        &meta,
        Body {
            generator: generator.name(),
            level: dist.level,
            lump_policy: &tg.lump_policy,
            exact: tg.exact,
            nu: &dist.nu,
            residual: dist.residual,
            geometric_tail: tail,
            sweep,
        },
    )?;
    Ok(Status::Ok)
}

fn cmd_stabilize(cli: &Cli, a: &StabilizeArgs, out: &Output) -> Result<Status> {
    let (cfg, entry, bytes) = load(&a.model.model)?;
    let control = entry
        .control
        .as_ref()
        .ok_or_else(|| Error::Config(format!("model `{}` has no control input", cfg.name)))?;
    let settings = CertifySettings {
        level: a.level.unwrap_or_else(|| cfg.truncation(crate::certify::DEFAULT_LEVEL)),
        tail: TailMass::Auto,
        form: a.form,
        margin: a.margin,
    };
    let budget = GainBudget { g_min: a.g_min, g_max: a.g_max, steps: a.g_steps };
    let controllable: BTreeSet<Mode> = control.plan.controllable().clone();
    let found = search_gain(&control.open_loop, control.plan.inputs(), &controllable, &settings, &budget)?;
    #[derive(Serialize)]
    struct Body {
        model: String,
        controllable: Vec<Mode>,
        found: bool,
        gain: Option<f64>,
        certificate: Option<crate::certify::Certificate>,
    }
    let (gain, certificate) = match &found {
        Some((plan, cert)) => {
            let g = controllable
                .iter()
                .find_map(|&i| plan.gain(i))
                .map_or(0.0, |l| l[(0, 0)]);
            (Some(g), Some(cert.clone()))
        }
        None => (None, None),
    };
    let meta = meta(cli, "stabilize", None, &bytes)?;
    out.json(
        "stabilize.json",
        &meta,
        Body {
            model: cfg.name.clone(),
            controllable: controllable.iter().copied().collect(),
            found: found.is_some(),
            gain,
            certificate,
        },
    )?;
    Ok(if found.is_some() { Status::Ok } else { Status::Inconclusive })
}

#[derive(Serialize)]
struct EstimateBody<'a, P: Serialize> {
    model: &'a str,
    sim: SimConfig,
    x0: Vec<f64>,
    i0: Mode,
    #[serde(flatten)]
    params: P,
    estimate: crate::verify::MCEstimate,
}

fn cmd_hitting(cli: &Cli, a: &HittingArgs, out: &Output) -> Result<Status> {
    let (_, entry, bytes) = load(&a.model.model)?;
    let m = entry.model.as_ref();
    let cfg = a.run.sim_config(m, 100.0)?;
    let (phi0, i0) = a.run.start(m, &cfg, 10.0)?;
    let k0 = mode_arg(a.k0)?;
    let est = estimate_hitting_time(m, &phi0, i0, a.h, k0, &cfg, a.paths)?;
    #[derive(Serialize)]
    struct P {
        h: f64,
        k0: Mode,
    }
    let meta = meta(cli, "verify hitting", Some(a.run.seed), &bytes)?;
    out.json(
        "hitting.json",
        &meta,
        EstimateBody { model: m.name(), sim: cfg, x0: phi0.newest().to_vec(), i0, params: P { h: a.h, k0 }, estimate: est },
    )?;
    Ok(if est.usable { Status::Ok } else { Status::Inconclusive })
}

fn cmd_descent(cli: &Cli, a: &DescentArgs, out: &Output) -> Result<Status> {
    let (_, entry, bytes) = load(&a.model.model)?;
    let m = entry.model.as_ref();
    let cfg = a.run.sim_config(m, 100.0)?;
    let (phi0, i0) = a.run.start(m, &cfg, 1.0)?;
    let k0 = mode_arg(a.k0)?;
    let est = estimate_mode_descent(m, &phi0, i0, k0, &cfg, a.paths)?;
    #[derive(Serialize)]
    struct P {
        k0: Mode,
    }
    let meta = meta(cli, "verify descent", Some(a.run.seed), &bytes)?;
    out.json(
        "descent.json",
        &meta,
        EstimateBody { model: m.name(), sim: cfg, x0: phi0.newest().to_vec(), i0, params: P { k0 }, estimate: est },
    )?;
    Ok(if est.usable { Status::Ok } else { Status::Inconclusive })
}

fn cmd_coupling(cli: &Cli, a: &CouplingArgs, out: &Output) -> Result<Status> {
    let (_, entry, bytes) = load(&a.model.model)?;
    let m = entry.model.as_ref();
    let cfg = a.run.sim_config(m, 10.0)?;
    let i0 = mode_arg(a.run.i0)?;
    let rows = coupling_decay(m, &entry.linearization.qhat, &a.radii, a.h, i0, &cfg, a.paths)?;
    #[derive(Serialize)]
    struct Body<'a> {
        model: &'a str,
        sim: SimConfig,
        h: f64,
        i0: Mode,
        rows: Vec<crate::verify::CouplingRow>,
    }
    let meta = meta(cli, "verify coupling", Some(a.run.seed), &bytes)?;
    out.json("coupling.json", &meta, Body { model: m.name(), sim: cfg, h: a.h, i0, rows })?;
    Ok(Status::Ok)
}

fn parse_point(s: &str, dim: usize) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| Error::InvalidArgument(format!("start `{s}`: {e}")))?;
    if v.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
    }
    Ok(v)
}

fn cmd_occupation(cli: &Cli, a: &OccupationArgs, out: &Output) -> Result<Status> {
    let (_, entry, bytes) = load(&a.model.model)?;
    let m = entry.model.as_ref();
    let cfg = a.run.sim_config(m, 50.0)?;
    let i0 = mode_arg(a.run.i0)?;
    let starts = if a.starts.is_empty() {
        vec![vec![1.0; m.dim()], vec![50.0; m.dim()]]
    } else {
        a.starts.iter().map(|s| parse_point(s, m.dim())).collect::<Result<Vec<_>>>()?
    };
    let starts = starts
        .iter()
        .map(|x| Ok((Segment::constant(x, m.delay(), cfg.dt)?, i0)))
        .collect::<Result<Vec<_>>>()?;
    let burn_in = a.burn_in.unwrap_or(cfg.horizon / 4.0);
    let binning = Binning::uniform(a.max_norm, a.bins, a.k0);
    let rep = occupation_stability(m, &starts, burn_in, &binning, &cfg, a.paths)?;
    let meta = meta(cli, "verify occupation", Some(a.run.seed), &bytes)?;
    if out.dir.is_some() {
        let mut buf = Vec::new();
        rep.write_csv(&mut buf, Some(&meta.comment()))
            .map_err(|source| Error::Io { path: "<buffer>".into(), source })?;
        out.write_file("occupation.csv", &buf)?;
    }
    #[derive(Serialize)]
    struct Body<'a> {
        model: &'a str,
        sim: SimConfig,
        burn_in: f64,
        distances: &'a [(usize, usize, f64)],
        max_distance: f64,
        blown_up: u64,
    }
    out.json(
        "occupation.json",
        &meta,
        Body {
            model: m.name(),
            sim: cfg,
            burn_in,
            distances: &rep.distances,
            max_distance: rep.max_distance(),
            blown_up: rep.blown_up,
        },
    )?;
    Ok(Status::Ok)
}

fn cmd_dynkin(cli: &Cli, a: &DynkinArgs, out: &Output) -> Result<Status> {
    let (_, entry, bytes) = load(&a.model.model)?;
    let m = entry.model.as_ref();
    let cfg = a.run.sim_config(m, 1.0)?;
    let (phi0, i0) = a.run.start(m, &cfg, 1.0)?;
    let v = match a.functional {
        Functional::Squared => ProductFunctional::squared_norm(),
        Functional::Constant => ProductFunctional::constant(1.0),
        Functional::ModeIndex => ProductFunctional::new().with_point(
            |_, i| i.get() as f64,
            |_, _, g| g.fill(0.0),
            |_, _, h| h.fill(0.0),
        ),
    };
    let est = dynkin_residual(&v, m, &phi0, i0, cfg.horizon, &cfg, a.paths)?;
    #[derive(Serialize)]
    struct P {
        functional: Functional,
    }
    let meta = meta(cli, "dynkin", Some(a.run.seed), &bytes)?;
    out.json(
        "dynkin.json",
        &meta,
        EstimateBody {
            model: m.name(),
            sim: cfg,
            x0: phi0.newest().to_vec(),
            i0,
            params: P { functional: a.functional },
            estimate: est,
        },
    )?;
    Ok(Status::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_spec_style_flags() {
        let cli = Cli::try_parse_from([
            "switchdiff", "verify", "hitting", "--model", "m.json", "--H", "1", "--k0", "2", "--T", "5",
            "--threads", "2",
        ])
        .unwrap();
        assert_eq!(cli.threads, Some(2));
        match cli.command {
            Command::Verify(VerifyCommand::Hitting(h)) => {
                assert_eq!(h.h, 1.0);
                assert_eq!(h.k0, 2);
                assert_eq!(h.run.horizon, Some(5.0));
            }
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["switchdiff", "certify", "--model", "m.json", "--N", "30", "--form", "thm41"])
            .unwrap();
        assert!(matches!(cli.command, Command::Certify(CertifyArgs { form: Form::Thm41, level: Some(30), .. })));
    }

    #[test]
    fn hash_ignores_threads_and_out() {
        let a = Cli::try_parse_from(["switchdiff", "certify", "--model", "m.json", "--threads", "1"]).unwrap();
        let b = Cli::try_parse_from(["switchdiff", "certify", "--model", "m.json", "--out", "x"]).unwrap();
        let c = Cli::try_parse_from(["switchdiff", "certify", "--model", "m.json", "--N", "10"]).unwrap();
        assert_eq!(config_hash(b"{}", &a).unwrap(), config_hash(b"{}", &b).unwrap());
        assert_ne!(config_hash(b"{}", &a).unwrap(), config_hash(b"{}", &c).unwrap());
        assert_ne!(config_hash(b"{}", &a).unwrap(), config_hash(b"{ }", &a).unwrap());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["switchdiff", "certify"]), 2);
        assert_eq!(main_with_args(["switchdiff", "certify", "--model", "/no/such/file.json"]), 2);
    }
}
