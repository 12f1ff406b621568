//! The linearization criterion for positive recurrence
//! `sum_i nu_i (Lambda_b(i) + Lambda_a(i)/2 - sum_j rho^2_sigma_j(i)) < 0`,
//! evaluated on a finite truncation of `Q-hat` with an explicit tail bound, and
//! a gain search for the feedback-stabilization variant.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{geometric_tail, stationary, truncate, StationaryDist};
use crate::error::{Error, Result};
use crate::mode::{Mode, PerMode};
use crate::model::{
    check_irreducible, check_local_lipschitz, check_rate_bound, check_rate_convergence,
    check_sublinear_residuals, Linearization, SwitchingDiffusion,
};
use crate::segment::Segment;
use crate::spectra::{a_of_i, summarize};

/// Which per-mode functional to sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    /// `Lambda_b + Lambda_a / 2 - sum_j rho^2_sigma_j`.
    #[default]
    Thm37,
    /// `2 Lambda_b + sum_j (Lambda_{sigma_j^T sigma_j} - rho^2_sigma_j)`.
    Thm41,
}

impl std::str::FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Form> {
        match s {
            "thm37" => Ok(Form::Thm37),
            "thm41" => Ok(Form::Thm41),
            other => Err(Error::InvalidArgument(format!("unknown form `{other}` (thm37|thm41)"))),
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Form::Thm37 => "thm37",
            Form::Thm41 => "thm41",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "POSITIVE_RECURRENT_CERTIFIED")]
    Certified,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Certified => "POSITIVE_RECURRENT_CERTIFIED",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Mass of `nu` beyond the truncation level.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TailMass {
    /// A bound known from outside, in `[0, 1)`.
    Supplied(f64),
    /// Extrapolate geometrically from the head of the truncated `nu`.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSource {
    Supplied,
    /// `Q-hat` is finite and the truncation kept all of it.
    Exact,
    Geometric,
    /// The head does not decay; the whole mass is charged to the tail.
    NoDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionFlag {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl AssumptionFlag {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        AssumptionFlag { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GainEntry {
    pub mode: Mode,
    /// Row-major entries of `L(i)`.
    pub gain: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub form: Form,
    pub level: usize,
    /// `c(1), ..., c(N)`.
    pub per_mode_c: Vec<f64>,
    pub nu: StationaryDist,
    /// `sum_{i <= N} nu_i c(i)`.
    pub partial_sum: f64,
    /// `sup_i |c(i)|`; exact because coefficients repeat past their head.
    pub c_bar: f64,
    pub tail_mass: f64,
    pub tail_source: TailSource,
    /// `c_bar * tail_mass`.
    pub tail_bound: f64,
    pub margin: f64,
    pub assumptions: Vec<AssumptionFlag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<GainEntry>>,
    pub verdict: Verdict,
}

impl Certificate {
    fn decide(&mut self) {
        let total = self.partial_sum + self.tail_bound;
        let ok = total < 0.0
            && -total >= self.margin * self.partial_sum.abs()
            && self.assumptions.iter().all(|a| a.pass);
        self.verdict = if ok { Verdict::Certified } else { Verdict::Inconclusive };
    }

    /// Records additional assumption checks and re-evaluates the verdict.
    pub fn with_assumptions(mut self, flags: impl IntoIterator<Item = AssumptionFlag>) -> Self {
        self.assumptions.extend(flags);
        self.decide();
        self
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

pub const DEFAULT_MARGIN: f64 = 0.1;
pub const DEFAULT_LEVEL: usize = 30;

#[derive(Debug, Clone, Copy)]
pub struct CertifySettings {
    pub level: usize,
    pub tail: TailMass,
    pub form: Form,
    /// Required `-(partial + tail) / |partial|`.
    pub margin: f64,
}

impl Default for CertifySettings {
    fn default() -> Self {
        CertifySettings {
            level: DEFAULT_LEVEL,
            tail: TailMass::Auto,
            form: Form::Thm37,
            margin: DEFAULT_MARGIN,
        }
    }
}

/// `c(i)` in the chosen form.
pub fn per_mode_cost(lin: &Linearization, i: Mode, form: Form) -> Result<f64> {
    let b = lin.drift.get(i);
    let sigmas = lin.noise.get(i);
    let n = b.nrows();
    if let Some(s) = sigmas.iter().find(|s| s.nrows() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: s.nrows() });
    }
    let lambda_b = summarize(b)?.lambda_max;
    let mut rho_sq = 0.0;
    for s in sigmas {
        let r = summarize(s)?.rho;
        rho_sq += r * r;
    }
    Ok(match form {
        Form::Thm37 => {
            let lambda_a = summarize(&a_of_i(sigmas)?)?.lambda_max;
            lambda_b + lambda_a / 2.0 - rho_sq
        }
        Form::Thm41 => {
            let mut per_component = 0.0;
            for s in sigmas {
                per_component += summarize(&(s.transpose() * s))?.lambda_max;
            }
            2.0 * lambda_b + per_component - rho_sq
        }
    })
}

fn tail_of(nu: &StationaryDist, exact: bool, tail: TailMass) -> Result<(f64, TailSource)> {
    match tail {
        TailMass::Supplied(m) => {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::InvalidArgument(format!("tail mass must lie in [0, 1), got {m}")));
            }
            Ok((m, TailSource::Supplied))
        }
        TailMass::Auto if exact => Ok((0.0, TailSource::Exact)),
        TailMass::Auto => Ok(match geometric_tail(&nu.nu) {
            Some((_, mass)) => (mass, TailSource::Geometric),
            None => (1.0, TailSource::NoDecay),
        }),
    }
}

/// Evaluates the criterion on modes `1..=settings.level`.
pub fn certify(lin: &Linearization, settings: &CertifySettings) -> Result<Certificate> {
    if !(settings.margin >= 0.0 && settings.margin.is_finite()) {
        return Err(Error::InvalidArgument(format!("margin must be nonnegative, got {}", settings.margin)));
    }
    let tg = truncate(&lin.qhat, settings.level)?;
    let nu = stationary(&tg)?;
    let level = tg.level;
    let per_mode_c = (1..=level)
        .map(|k| per_mode_cost(lin, Mode::of(k), settings.form))
        .collect::<Result<Vec<f64>>>()?;
    let partial_sum: f64 = nu.nu.iter().zip(&per_mode_c).map(|(v, c)| v * c).sum();
    let mut c_bar = per_mode_c.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    for k in level + 1..=lin.head_len() + 1 {
        c_bar = c_bar.max(per_mode_cost(lin, Mode::of(k), settings.form)?.abs());
    }
    let (tail_mass, tail_source) = tail_of(&nu, tg.exact, settings.tail)?;
    let mut cert = Certificate {
        form: settings.form,
        level,
        per_mode_c,
        nu,
        partial_sum,
        c_bar,
        tail_mass,
        tail_source,
        tail_bound: c_bar * tail_mass,
        margin: settings.margin,
        assumptions: vec![AssumptionFlag::new(
            "irreducible_truncation",
            true,
            format!("Q-hat restricted to 1..={level} is strongly connected"),
        )],
        gains: None,
        verdict: Verdict::Inconclusive,
    };
    cert.decide();
    Ok(cert)
}

/// The recurrence criterion in its canonical form.
pub fn certify_recurrence(lin: &Linearization, level: usize, tail: TailMass) -> Result<Certificate> {
    certify(lin, &CertifySettings { level, tail, ..CertifySettings::default() })
}

/// Feedback `u = -L(a) X` on the controllable modes; `L(i) = 0` elsewhere.
#[derive(Debug, Clone)]
pub struct GainPlan {
    controllable: BTreeSet<Mode>,
    gains: BTreeMap<Mode, DMatrix<f64>>,
    inputs: PerMode<DMatrix<f64>>,
}

impl GainPlan {
    /// `inputs` holds `B(i)` (`n x m`); each gain is `m x n`.
    pub fn new(
        controllable: BTreeSet<Mode>,
        gains: BTreeMap<Mode, DMatrix<f64>>,
        inputs: PerMode<DMatrix<f64>>,
    ) -> Result<GainPlan> {
        let (n, m) = inputs.get(Mode::FIRST).shape();
        if let Some(b) = inputs.head().iter().find(|b| b.shape() != (n, m)) {
            return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
        }
        for (&i, l) in &gains {
            if !controllable.contains(&i) && l.iter().any(|&v| v != 0.0) {
                return Err(Error::GainOnUncontrolledMode(i.get()));
            }
            if l.shape() != (m, n) {
                return Err(Error::DimensionMismatch { expected: m, got: l.nrows() });
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(GainPlan { controllable, gains, inputs })
    }

    pub fn zero(controllable: BTreeSet<Mode>, inputs: PerMode<DMatrix<f64>>) -> Result<GainPlan> {
        GainPlan::new(controllable, BTreeMap::new(), inputs)
    }

    /// `L(i) = g I` (rectangular identity) on every controllable mode.
    pub fn uniform(
        controllable: BTreeSet<Mode>,
        inputs: PerMode<DMatrix<f64>>,
        g: f64,
    ) -> Result<GainPlan> {
        let (n, m) = inputs.get(Mode::FIRST).shape();
        let gains = controllable
            .iter()
            .map(|&i| (i, DMatrix::identity(m, n) * g))
            .collect();
        GainPlan::new(controllable, gains, inputs)
    }

    pub fn controllable(&self) -> &BTreeSet<Mode> {
        &self.controllable
    }

    pub fn inputs(&self) -> &PerMode<DMatrix<f64>> {
        &self.inputs
    }

    pub fn gain(&self, i: Mode) -> Option<&DMatrix<f64>> {
        self.gains.get(&i)
    }

    pub fn entries(&self) -> Vec<GainEntry> {
        self.gains
            .iter()
            .map(|(&mode, l)| GainEntry {
                mode,
                gain: (0..l.nrows()).map(|r| l.row(r).iter().copied().collect()).collect(),
            })
            .collect()
    }

    /// `b(i) <- b(i) - B(i) L(i)`.
    pub fn closed_loop(&self, open: &Linearization) -> Result<Linearization> {
        let n = open.dim();
        if self.inputs.get(Mode::FIRST).nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.inputs.get(Mode::FIRST).nrows(),
            });
        }
        let last_gain = self.gains.keys().next_back().map_or(0, |m| m.get());
        let head = open.head_len().max(last_gain + 1);
        let drift: Vec<DMatrix<f64>> = (1..=head)
            .map(|k| {
                let i = Mode::of(k);
                let b = open.drift.get(i);
                match self.gains.get(&i) {
                    Some(l) => b - self.inputs.get(i) * l,
                    None => b.clone(),
                }
            })
            .collect();
        Linearization::new(
            PerMode::new(drift).expect("non-empty"),
            open.noise.clone(),
            open.qhat.clone(),
        )
    }
}

/// The criterion for the closed loop under `plan`.
pub fn certify_stabilization(
    open: &Linearization,
    plan: &GainPlan,
    settings: &CertifySettings,
) -> Result<Certificate> {
    let mut cert = certify(&plan.closed_loop(open)?, settings)?;
    cert.gains = Some(plan.entries());
    Ok(cert)
}

#[derive(Debug, Clone, Copy)]
pub struct GainBudget {
    pub g_min: f64,
    pub g_max: f64,
    /// Grid points strictly between `0` and `g_max` (geometric spacing).
    pub steps: usize,
}

impl Default for GainBudget {
    fn default() -> Self {
        GainBudget { g_min: 1e-2, g_max: 1e3, steps: 101 }
    }
}

impl GainBudget {
    pub fn grid(&self) -> Vec<f64> {
        let mut grid = vec![0.0];
        if self.steps == 0 || !(self.g_max > 0.0) {
            return grid;
        }
        let lo = self.g_min.min(self.g_max).max(f64::MIN_POSITIVE);
        if self.steps == 1 {
            grid.push(self.g_max);
            return grid;
        }
        let ratio = (self.g_max / lo).ln() / (self.steps - 1) as f64;
        grid.extend((0..self.steps).map(|k| lo * (ratio * k as f64).exp()));
        grid
    }
}

/// Smallest `g` on the budget grid for which `L(i) = g I` on `controllable`
/// certifies. `g = 0` is tried first, so an already certified open loop
/// returns the zero plan. `None` when the grid is exhausted.
pub fn search_gain(
    open: &Linearization,
    inputs: &PerMode<DMatrix<f64>>,
    controllable: &BTreeSet<Mode>,
    settings: &CertifySettings,
    budget: &GainBudget,
) -> Result<Option<(GainPlan, Certificate)>> {
    if controllable.is_empty() {
        return Err(Error::InvalidArgument("controllable set is empty".into()));
    }
    let zero = GainPlan::zero(controllable.clone(), inputs.clone())?;
    let base = certify_stabilization(open, &zero, settings)?;
    if base.is_certified() {
        return Ok(Some((zero, base)));
    }
    let inert = controllable.iter().all(|&i| inputs.get(i).iter().all(|&v| v == 0.0));
    if inert {
        return Ok(None);
    }
    let grid = budget.grid();
    let results: Vec<Result<Option<(GainPlan, Certificate)>>> = grid[1..]
        .par_iter()
        .map(|&g| {
            let plan = GainPlan::uniform(controllable.clone(), inputs.clone(), g)?;
            let cert = certify_stabilization(open, &plan, settings)?;
            Ok(cert.is_certified().then_some((plan, cert)))
        })
        .collect();
    for r in results {
        if let Some(found) = r? {
            return Ok(Some(found));
        }
    }
    Ok(None)
}

/// Runs the sampling diagnostics from the model module on a default probe set
/// and turns them into certificate flags.
pub fn model_assumptions<M: SwitchingDiffusion + ?Sized>(
    m: &M,
    lin: &Linearization,
    level: usize,
) -> Result<Vec<AssumptionFlag>> {
    let modes: Vec<Mode> = (1..=level.max(2)).map(Mode::of).collect();
    let n = m.dim();
    let mut segments = Vec::new();
    for r in [0.0, 1.0, 10.0, 1e2, 1e4] {
        for sign in [1.0, -1.0] {
            segments.push(Segment::constant(&vec![sign * r; n], m.delay(), m.delay())?);
        }
    }
    let rb = check_rate_bound(m, &modes, &segments);
    let mut flags = vec![AssumptionFlag::new(
        "rate_bound",
        rb.pass,
        format!("max q_i = {:.6} against M = {}, min rate {:.3e}", rb.max_total, rb.bound, rb.min_rate),
    )];

    let mut dirs = Vec::new();
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        dirs.push(e.clone());
        e[c] = -1.0;
        dirs.push(e);
    }
    let radii = [1e1, 1e2, 1e3, 1e4];
    let sub = check_sublinear_residuals(m, lin, &dirs, &radii, &modes, 1e-2)?;
    flags.push(AssumptionFlag::new(
        "sublinear_residuals",
        sub.pass,
        format!("ratio by radius {:?}: {:?}", sub.radii, sub.ratios),
    ));

    let rc = check_rate_convergence(m, lin, &radii, &modes, 2)?;
    let first = rc.deviations[0];
    let last = *rc.deviations.last().expect("non-empty");
    let vanishing = last <= 1e-9 || last <= 0.1 * first;
    flags.push(AssumptionFlag::new(
        "rate_convergence",
        rc.pass && vanishing,
        format!("deviation by radius {:?}: {:?}", rc.radii, rc.deviations),
    ));

    flags.push(AssumptionFlag::new(
        "irreducible_limit",
        check_irreducible(&lin.qhat, level)?,
        format!("strong connectivity of Q-hat on 1..={level}"),
    ));

    let lip = check_local_lipschitz(m, &modes[..modes.len().min(5)], 10.0, 500, 0);
    flags.push(AssumptionFlag::new(
        "local_lipschitz",
        lip.pass,
        format!("max difference quotient {:.4} on |x| <= {}", lip.max_quotient, lip.radius),
    ));
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Generator, Triplet};
    use crate::model::{registry_get, scalar_table};
    use proptest::prelude::*;
    use serde_json::json;

    fn scalar_lin(drift: Vec<f64>, sigma: Vec<f64>, qhat: Generator) -> Linearization {
        let noise = PerMode::new(sigma).unwrap().map(|&s| vec![DMatrix::from_element(1, 1, s)]);
        Linearization::new(scalar_table(&PerMode::new(drift).unwrap()), noise, qhat).unwrap()
    }

    #[test]
    fn per_mode_cost_examples() {
        let q = Generator::two_state(1.0, 1.0).unwrap();
        let lin = scalar_lin(vec![-2.5], vec![0.0], q.clone());
        assert_eq!(per_mode_cost(&lin, Mode::of(1), Form::Thm37).unwrap(), -2.5);
        let (a, s) = (0.7, 1.3);
        let lin = scalar_lin(vec![a], vec![s], q.clone());
        let c = per_mode_cost(&lin, Mode::of(1), Form::Thm37).unwrap();
        assert!((c - (a - s * s / 2.0)).abs() < 1e-14);
        let c41 = per_mode_cost(&lin, Mode::of(1), Form::Thm41).unwrap();
        assert!((c41 - 2.0 * a).abs() < 1e-14);
        let lin = scalar_lin(vec![0.0], vec![0.0], q);
        assert_eq!(per_mode_cost(&lin, Mode::of(3), Form::Thm37).unwrap(), 0.0);
    }

    #[test]
    fn mean_reverting_ou_certifies() {
        let e = registry_get("switched_ou", &json!({"theta": 1.0})).unwrap();
        let cert = certify_recurrence(&e.linearization, 30, TailMass::Auto).unwrap();
        assert!((cert.partial_sum + 1.0).abs() < 1e-9);
        assert!(cert.is_certified());
        assert_eq!(cert.tail_source, TailSource::Geometric);
    }

    #[test]
    fn expanding_drift_is_inconclusive() {
        let lin = scalar_lin(vec![1.0], vec![0.0], Generator::reset_two_or_advance());
        let cert = certify_recurrence(&lin, 30, TailMass::Auto).unwrap();
        assert!((cert.partial_sum - 1.0).abs() < 1e-9);
        assert_eq!(cert.verdict, Verdict::Inconclusive);
    }

    fn controlled_scalar_cert(gain: f64) -> Certificate {
        let e = registry_get("controlled_scalar", &json!({"L": [gain]})).unwrap();
        certify_recurrence(&e.linearization, 30, TailMass::Auto).unwrap()
    }

    #[test]
    fn controlled_scalar_hand_sums() {
        let good = controlled_scalar_cert(3.0);
        assert!((good.partial_sum + 0.5).abs() < 1e-9);
        assert!(good.is_certified());
        let bad = controlled_scalar_cert(1.0);
        assert!((bad.partial_sum - 0.5).abs() < 1e-9);
        assert!(!bad.is_certified());
    }

    #[test]
    fn zero_gain_matches_recurrence() {
        let e = registry_get("controlled_scalar", &json!({})).unwrap();
        let ctrl = e.control.unwrap();
        let zero = GainPlan::zero(ctrl.plan.controllable().clone(), ctrl.plan.inputs().clone()).unwrap();
        let a = certify_stabilization(&ctrl.open_loop, &zero, &CertifySettings::default()).unwrap();
        let b = certify_recurrence(&ctrl.open_loop, DEFAULT_LEVEL, TailMass::Auto).unwrap();
        assert_eq!(a.partial_sum, b.partial_sum);
        assert_eq!(a.tail_bound, b.tail_bound);
        assert_eq!(a.verdict, b.verdict);
    }

    #[test]
    fn gain_search_crosses_two() {
        let e = registry_get("controlled_scalar", &json!({})).unwrap();
        let ctrl = e.control.unwrap();
        let (plan, cert) = search_gain(
            &ctrl.open_loop,
            ctrl.plan.inputs(),
            ctrl.plan.controllable(),
            &CertifySettings::default(),
            &GainBudget::default(),
        )
        .unwrap()
        .unwrap();
        let g = plan.gain(Mode::of(1)).unwrap()[(0, 0)];
        assert!(g > 2.0, "{g}");
        assert!(cert.is_certified());
    }

    #[test]
    fn gain_search_edge_cases() {
        let settings = CertifySettings::default();
        let ctrl: BTreeSet<Mode> = [Mode::of(1)].into();
        let certified = scalar_lin(vec![-1.0], vec![0.0], Generator::reset_one_or_advance());
        let inputs = scalar_table(&PerMode::constant(1.0));
        let (plan, _) = search_gain(&certified, &inputs, &ctrl, &settings, &GainBudget::default())
            .unwrap()
            .unwrap();
        assert!(plan.gain(Mode::of(1)).is_none());

        let open = scalar_lin(vec![1.0], vec![0.0], Generator::reset_one_or_advance());
        let inert = scalar_table(&PerMode::constant(0.0));
        assert!(search_gain(&open, &inert, &ctrl, &settings, &GainBudget::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn gain_on_uncontrolled_mode_is_rejected() {
        let ctrl: BTreeSet<Mode> = [Mode::of(1)].into();
        let gains = [(Mode::of(2), DMatrix::from_element(1, 1, 1.0))].into();
        let err = GainPlan::new(ctrl, gains, scalar_table(&PerMode::constant(1.0))).unwrap_err();
        assert!(matches!(err, Error::GainOnUncontrolledMode(2)));
    }

    #[test]
    fn alternate_form_is_recorded() {
        let e = registry_get("controlled_scalar", &json!({"L": [3.0]})).unwrap();
        let cert = certify(
            &e.linearization,
            &CertifySettings { form: Form::Thm41, ..CertifySettings::default() },
        )
        .unwrap();
        assert_eq!(cert.form, Form::Thm41);
        // twice the canonical sum when there is no noise
        assert!((cert.partial_sum + 1.0).abs() < 1e-9);
        let v = serde_json::to_value(&cert).unwrap();
        assert_eq!(v["form"], "thm41");
        assert_eq!(v["verdict"], "POSITIVE_RECURRENT_CERTIFIED");
    }

    #[test]
    fn failed_assumption_blocks_certificate() {
        let e = registry_get("switched_ou", &json!({})).unwrap();
        let cert = certify_recurrence(&e.linearization, 30, TailMass::Auto)
            .unwrap()
            .with_assumptions([AssumptionFlag::new("x", false, "")]);
        assert_eq!(cert.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn builtin_assumptions_on_switched_ou() {
        let e = registry_get("switched_ou", &json!({})).unwrap();
        let flags = model_assumptions(e.model.as_ref(), &e.linearization, 20).unwrap();
        assert!(flags.iter().all(|f| f.pass), "{flags:?}");
    }

    #[test]
    fn tail_mass_validation_and_sources() {
        let lin = scalar_lin(vec![-1.0], vec![0.0], Generator::two_state(1.0, 2.0).unwrap());
        let cert = certify_recurrence(&lin, 10, TailMass::Auto).unwrap();
        assert_eq!(cert.tail_source, TailSource::Exact);
        assert_eq!(cert.tail_bound, 0.0);
        assert!(certify_recurrence(&lin, 10, TailMass::Supplied(1.0)).is_err());
    }

    #[test]
    fn larger_truncation_keeps_certificate() {
        let e = registry_get("controlled_scalar", &json!({"L": [3.0]})).unwrap();
        for n in [10, 20, 40, 80] {
            let c = certify_recurrence(&e.linearization, n, TailMass::Auto).unwrap();
            assert!(c.is_certified());
            assert!(c.partial_sum + c.tail_bound < 0.0);
        }
    }

    fn relabeled(size: usize, perm: &[usize], rates: &[f64], drift: &[f64]) -> (Linearization, Linearization) {
        let mut t = Vec::new();
        let mut tp = Vec::new();
        let mut k = 0;
        for i in 0..size {
            for j in 0..size {
                if i != j {
                    let rate = rates[k % rates.len()];
                    k += 1;
                    t.push(Triplet { i: Mode::of(i + 1), j: Mode::of(j + 1), rate });
                    tp.push(Triplet { i: Mode::of(perm[i] + 1), j: Mode::of(perm[j] + 1), rate });
                }
            }
        }
        let mut dp = vec![0.0; size];
        for i in 0..size {
            dp[perm[i]] = drift[i];
        }
        let zeros = vec![0.0; size];
        (
            scalar_lin(drift.to_vec(), zeros.clone(), Generator::from_triplets(&t).unwrap()),
            scalar_lin(dp, zeros, Generator::from_triplets(&tp).unwrap()),
        )
    }

    proptest! {
        #[test]
        fn verdict_invariant_under_relabeling(
            size in 3usize..6,
            rates in prop::collection::vec(0.1f64..3.0, 30),
            drift in prop::collection::vec(-2.0f64..1.0, 6),
            seed in any::<u64>(),
        ) {
            let mut perm: Vec<usize> = (0..size).collect();
            let mut s = seed;
            for i in (1..size).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let (a, b) = relabeled(size, &perm, &rates, &drift[..size]);
            let ca = certify_recurrence(&a, size, TailMass::Auto).unwrap();
            let cb = certify_recurrence(&b, size, TailMass::Auto).unwrap();
            prop_assert!((ca.partial_sum - cb.partial_sum).abs() < 1e-10);
            if (ca.partial_sum.abs() - 0.0).abs() > 1e-8 {
                prop_assert_eq!(ca.verdict, cb.verdict);
            }
        }

        #[test]
        fn scalar_partial_sum_nonincreasing_in_gain(
            a in -1.0f64..3.0,
            b in 0.1f64..2.0,
            g1 in 0.0f64..10.0,
            dg in 0.0f64..10.0,
        ) {
            let lin = scalar_lin(vec![a], vec![0.0], Generator::reset_one_or_advance());
            let inputs = scalar_table(&PerMode::constant(b));
            let ctrl: BTreeSet<Mode> = [Mode::of(1), Mode::of(2)].into();
            let s = CertifySettings::default();
            let p1 = GainPlan::uniform(ctrl.clone(), inputs.clone(), g1).unwrap();
            let p2 = GainPlan::uniform(ctrl, inputs, g1 + dg).unwrap();
            let c1 = certify_stabilization(&lin, &p1, &s).unwrap();
            let c2 = certify_stabilization(&lin, &p2, &s).unwrap();
            prop_assert!(c2.partial_sum <= c1.partial_sum + 1e-12);
        }
    }
}
