//! The closed registry of parametric model families.
//!
//! | name                | state | noise | rates read            |
//! |---------------------|-------|-------|-----------------------|
//! | `switched_ou`       | 1     | 1     | `\|\|phi\|\|` (sup norm) |
//! | `controlled_scalar` | 1     | 2     | `\|phi(-r)\|`           |
//! | `linear_2d`         | 2     | 2     | nothing (`Q = Q-hat`) |
//! | `fluid_queue`       | 1     | 1     | `\|\|phi\|\|`             |
//! | `predator_prey`     | 1     | 1     | `int phi d(mu)`        |

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{scalar_table, LinearModel, Linearization, RateLaw};
use crate::certify::GainPlan;
use crate::chain::{Generator, GeneratorFile};
use crate::error::{Error, Result};
use crate::mode::{Mode, PerMode};

pub const FAMILIES: [&str; 5] = [
    "switched_ou",
    "controlled_scalar",
    "linear_2d",
    "fluid_queue",
    "predator_prey",
];

/// Feedback data for families that carry a control input.
#[derive(Debug, Clone)]
pub struct ControlData {
    /// Linearization of the uncontrolled system (`L = 0`).
    pub open_loop: Linearization,
    /// Inputs, controllable set and the configured gains.
    pub plan: GainPlan,
}

/// A fully wired model: the simulator view, its linearization at infinity
/// (with any configured feedback already applied) and optional control data.
#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub model: Arc<LinearModel>,
    pub linearization: Linearization,
    pub control: Option<ControlData>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ModeValues {
    One(f64),
    Many(Vec<f64>),
}

impl ModeValues {
    fn table(&self, what: &str) -> Result<PerMode<f64>> {
        let head = match self {
            ModeValues::One(v) => vec![*v],
            ModeValues::Many(v) => v.clone(),
        };
        if head.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("`{what}` must be finite")));
        }
        PerMode::new(head).ok_or_else(|| Error::Config(format!("`{what}` must not be empty")))
    }

    fn positive_table(&self, what: &str) -> Result<PerMode<f64>> {
        let t = self.table(what)?;
        if t.head().iter().any(|&v| v <= 0.0) {
            return Err(Error::Config(format!("`{what}` must be positive")));
        }
        Ok(t)
    }
}

fn one(v: f64) -> ModeValues {
    ModeValues::One(v)
}

fn default_delay() -> f64 {
    1.0
}

fn parse<P: DeserializeOwned>(params: &serde_json::Value) -> Result<P> {
    let v = if params.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        params.clone()
    };
    serde_json::from_value(v).map_err(|e| Error::Config(format!("invalid params: {e}")))
}

fn max_of(t: &PerMode<f64>) -> f64 {
    t.head().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn zero_noise(n: usize, d: usize) -> PerMode<Vec<DMatrix<f64>>> {
    PerMode::constant(vec![DMatrix::zeros(n, n); d])
}

/// Builds a registry model from its family name and JSON parameters.
pub fn registry_get(name: &str, params: &serde_json::Value) -> Result<RegistryEntry> {
    match name {
        "switched_ou" => switched_ou(parse(params)?),
        "controlled_scalar" => controlled_scalar(parse(params)?),
        "linear_2d" => linear_2d(parse(params)?),
        "fluid_queue" => fluid_queue(parse(params)?),
        "predator_prey" => predator_prey(parse(params)?),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// `dX = theta(a)(mu(a) - X) dt + sigma(a) dW`, with
/// `q_ij(phi) = 1 + c_i/(||phi|| + 1)` on the pattern of
/// [`Generator::reset_two_or_advance`].
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SwitchedOuParams {
    #[serde(default = "default_theta")]
    theta: ModeValues,
    #[serde(default = "default_zero")]
    mu: ModeValues,
    #[serde(default = "default_one")]
    sigma: ModeValues,
    #[serde(default = "default_one")]
    c: ModeValues,
    #[serde(default = "default_delay")]
    delay: f64,
}

fn default_theta() -> ModeValues {
    one(1.0)
}
fn default_zero() -> ModeValues {
    one(0.0)
}
fn default_one() -> ModeValues {
    one(1.0)
}

fn switched_ou(p: SwitchedOuParams) -> Result<RegistryEntry> {
    let theta = p.theta.table("theta")?;
    let mu = p.mu.table("mu")?;
    let sigma = p.sigma.table("sigma")?;
    let c = p.c.positive_table("c")?;
    let bound = 3.0 * (1.0 + max_of(&c));

    let c_rates = c.clone();
    let rates = RateLaw::Path(Arc::new(move |seg, i, row| {
        let extra = c_rates.get(i) / (seg.sup_norm() + 1.0);
        let q = 1.0 + extra;
        row.clear();
        match i.get() {
            1 => {
                row.add(Mode::of(2), q);
                row.add(Mode::of(3), q);
            }
            2 => {
                row.add(Mode::of(1), q);
                row.add(Mode::of(3), q);
            }
            _ => {
                row.add(Mode::of(1), q);
                row.add(Mode::of(2), q);
                row.add(i.next(), q);
            }
        }
    }));

    let drift = scalar_table(&theta.map(|t| -t));
    let noise = zero_noise(1, 1);
    let (th, m, s) = (theta.clone(), mu, sigma);
    let model = LinearModel::new("switched_ou", p.delay, drift, noise, rates, bound)?
        .with_drift_residual(move |_, i, out| out[0] += th.get(i) * m.get(i))
        .with_diffusion_residual(move |_, i, out| out[0] += s.get(i));
    let linearization = model.linearization(Generator::reset_two_or_advance())?;
    Ok(RegistryEntry { model: Arc::new(model), linearization, control: None })
}

/// `dX = [C(a) + (A(a) - B(a)L(a)) X] dt + sigma(a) X dW1 + dW2` with
/// `Q(phi) = W(|phi(-r)|)`, `W(x)` having entries `x/(c_i + x)` on the pattern
/// of [`Generator::reset_one_or_advance`].
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlledScalarParams {
    #[serde(default = "default_one", rename = "A")]
    a: ModeValues,
    #[serde(default = "default_one", rename = "B")]
    b: ModeValues,
    #[serde(default = "default_zero", rename = "C")]
    c_shift: ModeValues,
    #[serde(default = "default_zero")]
    sigma: ModeValues,
    #[serde(default = "default_one")]
    c: ModeValues,
    /// Gains `L(1), L(2), ...`; modes past the list have `L = 0`.
    #[serde(default, rename = "L")]
    gains: Vec<f64>,
    #[serde(default = "default_controllable")]
    controllable: Vec<Mode>,
    #[serde(default = "default_delay")]
    delay: f64,
}

fn default_controllable() -> Vec<Mode> {
    vec![Mode::FIRST]
}

fn controlled_scalar(p: ControlledScalarParams) -> Result<RegistryEntry> {
    let a = p.a.table("A")?;
    let b = p.b.table("B")?;
    let shift = p.c_shift.table("C")?;
    let sigma = p.sigma.table("sigma")?;
    let c = p.c.positive_table("c")?;
    if p.gains.iter().any(|g| !g.is_finite()) {
        return Err(Error::Config("`L` must be finite".into()));
    }

    let controllable: BTreeSet<Mode> = p.controllable.iter().copied().collect();
    let gains: BTreeMap<Mode, DMatrix<f64>> = p
        .gains
        .iter()
        .enumerate()
        .filter(|(_, &g)| g != 0.0)
        .map(|(k, &g)| (Mode::of(k + 1), DMatrix::from_element(1, 1, g)))
        .collect();
    let plan = GainPlan::new(controllable, gains, scalar_table(&b))?;

    // The head runs one past the last gain so the repeated tail has L = 0.
    let head = a.head_len().max(b.head_len()).max(p.gains.len() + 1);
    let closed: Vec<f64> = (1..=head)
        .map(|k| {
            let m = Mode::of(k);
            let g = p.gains.get(k - 1).copied().unwrap_or(0.0);
            a.get(m) - b.get(m) * g
        })
        .collect();
    let closed = PerMode::new(closed).expect("non-empty");

    let c_rates = c.clone();
    let rates = RateLaw::Path(Arc::new(move |seg, i, row| {
        let x = seg.oldest()[0].abs();
        let w = x / (c_rates.get(i) + x);
        row.clear();
        if i.get() > 1 {
            row.add(Mode::of(1), w);
        }
        row.add(i.next(), w);
    }));

    let noise_of = |s: &f64| vec![DMatrix::from_element(1, 1, *s), DMatrix::zeros(1, 1)];
    let shift_r = shift.clone();
    let model = LinearModel::new(
        "controlled_scalar",
        p.delay,
        scalar_table(&closed),
        sigma.map(noise_of),
        rates.clone(),
        2.0,
    )?
    .with_drift_residual(move |_, i, out| out[0] += shift_r.get(i))
    .with_diffusion_residual(|_, _, out| out[1] += 1.0);
    let qhat = Generator::reset_one_or_advance();
    let linearization = model.linearization(qhat.clone())?;
    let open_loop = Linearization::new(scalar_table(&a), sigma.map(noise_of), qhat)?;
    Ok(RegistryEntry {
        model: Arc::new(model),
        linearization,
        control: Some(ControlData { open_loop, plan }),
    })
}

/// Planar model `dX = (B(a) X + A(a)/(1 + |X|)) dt + s(X) diag(c1 X1, c2 X2) dW`
/// with `s(X) = (|X1| + |X2|)/(2 + |X1| + |X2|)` and `Q(phi) = Q-hat`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Linear2dParams {
    #[serde(default = "default_b2", rename = "B")]
    b: Vec<[[f64; 2]; 2]>,
    #[serde(default = "default_a2", rename = "A")]
    a: Vec<[f64; 2]>,
    #[serde(default = "default_one")]
    c1: ModeValues,
    #[serde(default = "default_one")]
    c2: ModeValues,
    #[serde(default = "default_generator")]
    generator: GeneratorFile,
    #[serde(default = "default_delay")]
    delay: f64,
}

fn default_b2() -> Vec<[[f64; 2]; 2]> {
    vec![[[-2.0, 0.0], [0.0, -2.0]]]
}
fn default_a2() -> Vec<[f64; 2]> {
    vec![[1.0, 1.0]]
}
fn default_generator() -> GeneratorFile {
    GeneratorFile { family: Some("reset_two_or_advance".into()), triplets: None }
}

fn linear_2d(p: Linear2dParams) -> Result<RegistryEntry> {
    let b = PerMode::new(
        p.b.iter()
            .map(|m| DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]))
            .collect(),
    )
    .ok_or_else(|| Error::Config("`B` must not be empty".into()))?;
    let a = PerMode::new(p.a.clone()).ok_or_else(|| Error::Config("`A` must not be empty".into()))?;
    let c1 = p.c1.table("c1")?;
    let c2 = p.c2.table("c2")?;
    if c1.head().iter().chain(c2.head()).any(|&v| v == 0.0) {
        return Err(Error::Config("`c1`, `c2` must be nonzero".into()));
    }
    let qhat = p.generator.build()?;

    let head = c1.head_len().max(c2.head_len());
    let noise = PerMode::new(
        (1..=head)
            .map(|k| {
                let m = Mode::of(k);
                vec![
                    DMatrix::from_row_slice(2, 2, &[*c1.get(m), 0.0, 0.0, 0.0]),
                    DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, *c2.get(m)]),
                ]
            })
            .collect(),
    )
    .expect("non-empty");

    let (c1r, c2r) = (c1.clone(), c2.clone());
    let model = LinearModel::frozen("linear_2d", p.delay, b, noise, qhat.clone())?
        .with_drift_residual(move |x, i, out| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let v = a.get(i);
            out[0] += v[0] / (1.0 + r);
            out[1] += v[1] / (1.0 + r);
        })
        .with_diffusion_residual(move |x, i, out| {
            let l1 = x[0].abs() + x[1].abs();
            let damp = l1 / (2.0 + l1) - 1.0;
            out[0] += damp * c1r.get(i) * x[0];
            out[3] += damp * c2r.get(i) * x[1];
        });
    let linearization = model.linearization(qhat)?;
    Ok(RegistryEntry { model: Arc::new(model), linearization, control: None })
}

/// Fluid buffer `dX/dt = f(a) 1{X > 0} + f(a)^+ 1{X = 0}`, kept at `X >= 0`.
/// The environment is a birth-death chain whose down rate grows with the
/// recent buffer peak: `q_{i,i+1} = up`,
/// `q_{i,i-1} = down + kappa ||phi|| / (1 + ||phi||)`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FluidQueueParams {
    #[serde(default = "default_net")]
    net_rate: ModeValues,
    #[serde(default = "default_up")]
    up: f64,
    #[serde(default = "default_down")]
    down: f64,
    #[serde(default = "default_kappa")]
    kappa: f64,
    #[serde(default = "default_delay")]
    delay: f64,
}

fn default_net() -> ModeValues {
    ModeValues::Many(vec![1.0, -0.5, -1.0])
}
fn default_up() -> f64 {
    1.0
}
fn default_down() -> f64 {
    1.0
}
fn default_kappa() -> f64 {
    1.0
}

fn fluid_queue(p: FluidQueueParams) -> Result<RegistryEntry> {
    let net = p.net_rate.table("net_rate")?;
    for (what, v) in [("up", p.up), ("down", p.down), ("kappa", p.kappa)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("`{what}` must be nonnegative")));
        }
    }
    if p.up + p.down + p.kappa <= 0.0 {
        return Err(Error::Config("fluid_queue needs a positive switching rate".into()));
    }
    let (up, down, kappa) = (p.up, p.down, p.kappa);
    let rates = RateLaw::Path(Arc::new(move |seg, i, row| {
        let peak = seg.sup_norm();
        row.clear();
        row.add(i.next(), up);
        if let Some(prev) = i.prev() {
            row.add(prev, down + kappa * peak / (1.0 + peak));
        }
    }));
    let model = LinearModel::new(
        "fluid_queue",
        p.delay,
        scalar_table(&PerMode::constant(0.0)),
        zero_noise(1, 1),
        rates,
        up + down + kappa,
    )?
    .with_drift_residual(move |x, i, out| {
        let f = *net.get(i);
        out[0] += if x[0] > 0.0 { f } else { f.max(0.0) };
    })
    .with_nonnegative_state();
    let linearization = model.linearization(Generator::birth_death(up, down + kappa)?)?;
    Ok(RegistryEntry { model: Arc::new(model), linearization, control: None })
}

/// Predator density `dX = X (rho B a - D - C X) dt + sigma X dW`; prey count `a`
/// is a birth-death process with birth `beta n` and death
/// `n (delta + c n + B int phi d(mu))`. Rates need a uniform bound, so births
/// stop at `max_prey` and the functional is clamped to `[0, density_cap]`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredatorPreyParams {
    #[serde(default = "pp_beta")]
    beta: f64,
    #[serde(default = "pp_delta")]
    delta: f64,
    #[serde(default = "pp_c")]
    c: f64,
    #[serde(default = "pp_b", rename = "B")]
    b: f64,
    #[serde(default = "pp_d", rename = "D")]
    d: f64,
    #[serde(default = "pp_cc", rename = "C")]
    cc: f64,
    #[serde(default = "pp_rho")]
    rho: f64,
    #[serde(default = "pp_sigma")]
    sigma: f64,
    /// Discrete measure `mu` as `(s, w)` pairs on `[-r, 0]`; defaults to a
    /// unit point mass at `-r`.
    #[serde(default)]
    weights: Option<Vec<(f64, f64)>>,
    #[serde(default = "pp_max_prey")]
    max_prey: usize,
    #[serde(default = "pp_density_cap")]
    density_cap: f64,
    #[serde(default = "default_delay")]
    delay: f64,
}

fn pp_beta() -> f64 {
    1.0
}
fn pp_delta() -> f64 {
    0.2
}
fn pp_c() -> f64 {
    0.05
}
fn pp_b() -> f64 {
    0.5
}
fn pp_d() -> f64 {
    1.0
}
fn pp_cc() -> f64 {
    0.5
}
fn pp_rho() -> f64 {
    0.4
}
fn pp_sigma() -> f64 {
    0.2
}
fn pp_max_prey() -> usize {
    40
}
fn pp_density_cap() -> f64 {
    50.0
}

fn predator_prey(p: PredatorPreyParams) -> Result<RegistryEntry> {
    let nonneg = [
        ("beta", p.beta),
        ("delta", p.delta),
        ("c", p.c),
        ("B", p.b),
        ("D", p.d),
        ("C", p.cc),
        ("rho", p.rho),
        ("density_cap", p.density_cap),
    ];
    for (what, v) in nonneg {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("`{what}` must be nonnegative")));
        }
    }
    if p.max_prey < 2 {
        return Err(Error::Config("`max_prey` must be at least 2".into()));
    }
    let weights = p.weights.clone().unwrap_or_else(|| vec![(-p.delay, 1.0)]);
    if weights.iter().any(|&(s, w)| !(s >= -p.delay && s <= 0.0) || !w.is_finite()) {
        return Err(Error::Config("`weights` must be finite with s in [-r, 0]".into()));
    }
    let cap = p.max_prey;
    let capf = cap as f64;
    let (beta, delta, c, bb, dcap) = (p.beta, p.delta, p.c, p.b, p.density_cap);
    let bound = beta * capf + capf * (delta + c * capf + bb * dcap);

    let rates = RateLaw::Path(Arc::new(move |seg, i, row| {
        let n = i.get() as f64;
        let level = seg.integrate_component(&weights, 0).unwrap_or(0.0).clamp(0.0, dcap);
        row.clear();
        if i.get() < cap {
            row.add(i.next(), beta * n);
        }
        // modes above the cap are unreachable; their rates are capped too
        let nd = n.min(capf);
        if let Some(prev) = i.prev() {
            row.add(prev, nd * (delta + c * nd + bb * level));
        }
    }));

    let growth: Vec<f64> = (1..=cap).map(|n| p.rho * p.b * n as f64 - p.d).collect();
    let drift = scalar_table(&PerMode::new(growth).expect("cap >= 2"));
    let noise = PerMode::constant(vec![DMatrix::from_element(1, 1, p.sigma)]);
    let cc = p.cc;
    let model = LinearModel::new("predator_prey", p.delay, drift, noise, rates, bound)?
        .with_drift_residual(move |x, _, out| out[0] -= cc * x[0] * x[0]);
    let qhat = Generator::from_fn("predator_prey_limit", bound, 2, move |i, row| {
        let n = i.get() as f64;
        row.clear();
        if i.get() < cap {
            row.add(i.next(), beta * n);
        }
        let nd = n.min(capf);
        if let Some(prev) = i.prev() {
            row.add(prev, nd * (delta + c * nd + bb * dcap));
        }
    });
    let linearization = model.linearization(qhat)?;
    Ok(RegistryEntry { model: Arc::new(model), linearization, control: None })
}
