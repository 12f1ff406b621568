//! Generators over the countable mode space, finite truncations and
//! stationary distributions.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode::{Mode, RateRow};

/// Largest truncation handled by the dense solver.
pub const MAX_DENSE_LEVEL: usize = 2000;

type RowFn = dyn Fn(Mode, &mut RateRow) + Send + Sync;

#[derive(Clone)]
enum Rule {
    Table(Vec<RateRow>),
    Func(Arc<RowFn>),
}

/// A conservative generator `Q = (q_ij)` on modes 1, 2, ...; rows are
/// produced on demand as sparse off-diagonal rates.
#[derive(Clone)]
pub struct Generator {
    name: String,
    rule: Rule,
    rate_bound: f64,
    min_level: usize,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("name", &self.name)
            .field("rate_bound", &self.rate_bound)
            .field("size", &self.size())
            .finish()
    }
}

/// One `{i, j, rate}` entry of a sparse generator file.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Triplet {
    pub i: Mode,
    pub j: Mode,
    pub rate: f64,
}

impl Generator {
    /// Finite generator from off-diagonal triplets. Diagonal entries are
    /// implied by conservativeness and ignored if given.
    pub fn from_triplets(triplets: &[Triplet]) -> Result<Generator> {
        let size = triplets
            .iter()
            .map(|t| t.i.get().max(t.j.get()))
            .max()
            .ok_or_else(|| Error::InvalidArgument("empty triplet list".into()))?;
        let mut rows = vec![RateRow::new(); size];
        for t in triplets {
            if t.i == t.j {
                continue;
            }
            if !(t.rate >= 0.0 && t.rate.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "rate q_{}{} = {} must be finite and nonnegative",
                    t.i, t.j, t.rate
                )));
            }
            rows[t.i.index()].add(t.j, t.rate);
        }
        let rate_bound = rows.iter().map(RateRow::total).fold(0.0, f64::max);
        Ok(Generator {
            name: "triplets".into(),
            rule: Rule::Table(rows),
            rate_bound,
            min_level: 2,
        })
    }

    /// Countable generator from a row rule. `rate_bound` must dominate every
    /// row total; `min_level` is the smallest truncation that keeps the rule's
    /// structure (e.g. a jump from mode 1 to mode 3 needs at least 3).
    pub fn from_fn(
        name: impl Into<String>,
        rate_bound: f64,
        min_level: usize,
        row: impl Fn(Mode, &mut RateRow) + Send + Sync + 'static,
    ) -> Generator {
        Generator {
            name: name.into(),
            rule: Rule::Func(Arc::new(row)),
            rate_bound,
            min_level: min_level.max(2),
        }
    }

    /// `[[-a, a], [b, -b]]`.
    pub fn two_state(a: f64, b: f64) -> Result<Generator> {
        Generator::from_triplets(&[
            Triplet { i: Mode::of(1), j: Mode::of(2), rate: a },
            Triplet { i: Mode::of(2), j: Mode::of(1), rate: b },
        ])
    }

    /// Every mode jumps at unit rate to modes 1 and 2 (excluding itself) and
    /// to its successor; mode 1 additionally jumps to 3 so modes 1 and 2 both
    /// leave at total rate 2, while higher modes leave at rate 3.
    pub fn reset_two_or_advance() -> Generator {
        Generator::from_fn("reset_two_or_advance", 3.0, 3, |i, row| {
            row.clear();
            match i.get() {
                1 => {
                    row.add(Mode::of(2), 1.0);
                    row.add(Mode::of(3), 1.0);
                }
                2 => {
                    row.add(Mode::of(1), 1.0);
                    row.add(Mode::of(3), 1.0);
                }
                _ => {
                    row.add(Mode::of(1), 1.0);
                    row.add(Mode::of(2), 1.0);
                    row.add(i.next(), 1.0);
                }
            }
        })
    }

    /// Mode 1 advances to 2 at unit rate; every higher mode resets to 1 or
    /// advances, each at unit rate.
    pub fn reset_one_or_advance() -> Generator {
        Generator::from_fn("reset_one_or_advance", 2.0, 2, |i, row| {
            row.clear();
            if i.get() > 1 {
                row.add(Mode::of(1), 1.0);
            }
            row.add(i.next(), 1.0);
        })
    }

    /// Birth-death chain: up at rate `up`, down (from modes >= 2) at `down`.
    pub fn birth_death(up: f64, down: f64) -> Result<Generator> {
        if !(up >= 0.0 && down >= 0.0 && up.is_finite() && down.is_finite()) {
            return Err(Error::InvalidArgument("birth-death rates must be nonnegative".into()));
        }
        Ok(Generator::from_fn("birth_death", up + down, 2, move |i, row| {
            row.clear();
            row.add(i.next(), up);
            if let Some(p) = i.prev() {
                row.add(p, down);
            }
        }))
    }

    /// Built-in generator by family name.
    pub fn family(name: &str) -> Result<Generator> {
        match name {
            "reset_two_or_advance" => Ok(Generator::reset_two_or_advance()),
            "reset_one_or_advance" => Ok(Generator::reset_one_or_advance()),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `sup_i q_i`.
    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    /// Number of modes for finite generators.
    pub fn size(&self) -> Option<usize> {
        match &self.rule {
            Rule::Table(rows) => Some(rows.len()),
            Rule::Func(_) => None,
        }
    }

    pub fn min_level(&self) -> usize {
        self.min_level
    }

    /// Off-diagonal rates of row `i`, written into `out`.
    pub fn row(&self, i: Mode, out: &mut RateRow) {
        match &self.rule {
            Rule::Table(rows) => {
                out.clear();
                if let Some(r) = rows.get(i.index()) {
                    for (j, q) in r.iter() {
                        out.add(j, q);
                    }
                }
            }
            Rule::Func(f) => f(i, out),
        }
    }
}

/// Generator restricted to modes `1..=level`, with rates leaving the window
/// folded into the boundary mode.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    pub level: usize,
    pub matrix: DMatrix<f64>,
    pub lump_policy: String,
    /// True when no rate had to be lumped (finite generator fully kept).
    pub exact: bool,
}

/// Keeps modes `1..=n`; a rate `q_ij` with `j > n` is added to `q_in`, and for
/// `i = n` it becomes a self-loop that cancels into the diagonal. Diagonals are
/// recomputed as minus the kept off-diagonal row sum.
pub fn truncate(generator: &Generator, n: usize) -> Result<TruncatedGenerator> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("truncation level must be >= 2, got {n}")));
    }
    if n < generator.min_level() {
        return Err(Error::InvalidArgument(format!(
            "truncation level {n} is below the {} modes the generator `{}` needs",
            generator.min_level(),
            generator.name()
        )));
    }
    if n > MAX_DENSE_LEVEL {
        return Err(Error::InvalidArgument(format!(
            "truncation level {n} exceeds the dense limit {MAX_DENSE_LEVEL}"
        )));
    }
    let level = generator.size().map_or(n, |k| k.min(n));
    let boundary = Mode::of(level);
    let mut q = DMatrix::zeros(level, level);
    let mut row = RateRow::new();
    let mut lumped = false;
    for i in 1..=level {
        let mi = Mode::of(i);
        generator.row(mi, &mut row);
        for (j, rate) in row.iter() {
            if rate < 0.0 || !rate.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "generator `{}` returned rate {rate} for q_{i}{j}",
                    generator.name()
                )));
            }
            let target = if j > boundary {
                lumped = true;
                boundary
            } else {
                j
            };
            if target != mi {
                q[(i - 1, target.index())] += rate;
            }
        }
        let off: f64 = (0..level).filter(|&c| c != i - 1).map(|c| q[(i - 1, c)]).sum();
        q[(i - 1, i - 1)] = -off;
    }
    Ok(TruncatedGenerator {
        level,
        matrix: q,
        lump_policy: format!("rates to modes > {level} folded into mode {level}"),
        exact: !lumped,
    })
}

/// Number of strongly connected components of the positive off-diagonal
/// pattern.
pub fn communicating_classes(q: &DMatrix<f64>) -> usize {
    let n = q.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * 3);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && q[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    kosaraju_scc(&g).len()
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryDist {
    pub nu: Vec<f64>,
    /// `||nu Q||_1`.
    pub residual: f64,
    pub level: usize,
}

impl StationaryDist {
    pub fn get(&self, mode: Mode) -> f64 {
        self.nu.get(mode.index()).copied().unwrap_or(0.0)
    }
}

const RESIDUAL_LIMIT: f64 = 1e-8;

/// Solves `nu Q = 0, sum nu = 1` by replacing the last equation of
/// `Q^T nu = 0` with the normalization row.
pub fn stationary(tg: &TruncatedGenerator) -> Result<StationaryDist> {
    let n = tg.level;
    let classes = communicating_classes(&tg.matrix);
    if classes != 1 {
        return Err(Error::Reducible { components: classes });
    }
    let mut a = tg.matrix.transpose();
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let sol = a.lu().solve(&b).ok_or(Error::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let mut nu: Vec<f64> = sol.iter().copied().collect();
    // Round-off can leave entries like -1e-17 where the true value is tiny.
    if nu.iter().any(|&v| v < -1e-10) {
        return Err(Error::Singular);
    }
    for v in &mut nu {
        *v = v.max(0.0);
    }
    let total: f64 = nu.iter().sum();
    for v in &mut nu {
        *v /= total;
    }
    let residual = left_residual(&tg.matrix, &nu);
    if residual > RESIDUAL_LIMIT {
        return Err(Error::Singular);
    }
    Ok(StationaryDist { nu, residual, level: n })
}

/// `||nu Q||_1`, computed directly from the matrix.
pub fn left_residual(q: &DMatrix<f64>, nu: &[f64]) -> f64 {
    (0..q.ncols())
        .map(|j| (0..q.nrows()).map(|i| nu[i] * q[(i, j)]).sum::<f64>().abs())
        .sum()
}

/// Estimated probability mass beyond mode `level - 1`, extrapolating the ratio
/// of the last two entries inside the boundary that sit above round-off
/// (`1e-12` of the largest entry). When the solve has underflowed near the
/// boundary the extrapolation starts earlier, which only adds mass already
/// counted. Returns `(ratio, mass)`; `None` when the head does not decay.
pub fn geometric_tail(nu: &[f64]) -> Option<(f64, f64)> {
    let n = nu.len();
    if n < 3 {
        return None;
    }
    let floor = 1e-12 * nu.iter().cloned().fold(0.0, f64::max);
    let j = (0..n - 2).rev().find(|&j| nu[j] > floor && nu[j + 1] > floor)?;
    let (a, b) = (nu[j], nu[j + 1]);
    let ratio = b / a;
    if !(ratio < 1.0) {
        return None;
    }
    Some((ratio, b * ratio / (1.0 - ratio)))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub level: usize,
    pub head: Vec<f64>,
    /// l1 distance to the previous level's distribution on their common head.
    pub l1_change: Option<f64>,
}

const SWEEP_HEAD: usize = 5;

pub fn convergence_sweep(generator: &Generator, levels: &[usize]) -> Result<Vec<SweepRow>> {
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("sweep levels must be increasing".into()));
    }
    let dists: Vec<StationaryDist> = levels
        .par_iter()
        .map(|&n| truncate(generator, n).and_then(|tg| stationary(&tg)))
        .collect::<Result<_>>()?;
    Ok(dists
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let l1_change = (k > 0).then(|| {
                let prev = &dists[k - 1].nu;
                let common = prev.len().min(d.nu.len());
                (0..common).map(|i| (prev[i] - d.nu[i]).abs()).sum()
            });
            SweepRow {
                level: d.level,
                head: d.nu.iter().take(SWEEP_HEAD).copied().collect(),
                l1_change,
            }
        })
        .collect())
}

/// Generator description accepted on the command line: either a built-in
/// family or an explicit triplet list.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorFile {
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub triplets: Option<Vec<Triplet>>,
}

impl GeneratorFile {
    pub fn build(&self) -> Result<Generator> {
        match (&self.family, &self.triplets) {
            (Some(f), None) => Generator::family(f),
            (None, Some(t)) => Generator::from_triplets(t),
            _ => Err(Error::Config(
                "generator file needs exactly one of `family` or `triplets`".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_sums(q: &DMatrix<f64>) -> Vec<f64> {
        (0..q.nrows()).map(|i| q.row(i).sum()).collect()
    }

    #[test]
    fn two_state_unchanged() {
        let g = Generator::two_state(0.7, 1.3).unwrap();
        let tg = truncate(&g, 2).unwrap();
        assert!(tg.exact);
        assert_eq!(tg.matrix, DMatrix::from_row_slice(2, 2, &[-0.7, 0.7, 1.3, -1.3]));
        let d = stationary(&tg).unwrap();
        assert!((d.nu[0] - 1.3 / 2.0).abs() < 1e-14);
        assert!((d.nu[1] - 0.7 / 2.0).abs() < 1e-14);
    }

    #[test]
    fn reset_one_truncated_at_four() {
        let tg = truncate(&Generator::reset_one_or_advance(), 4).unwrap();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            -1.0, 1.0, 0.0, 0.0,
             1.0, -2.0, 1.0, 0.0,
             1.0, 0.0, -2.0, 1.0,
             1.0, 0.0, 0.0, -1.0,
        ]);
        assert_eq!(tg.matrix, expected);
        assert!(!tg.exact);
    }

    #[test]
    fn boundary_self_loop_cancels() {
        let tg = truncate(&Generator::reset_two_or_advance(), 6).unwrap();
        let last = tg.matrix.row(5);
        assert_eq!(last[0], 1.0);
        assert_eq!(last[1], 1.0);
        assert_eq!(last[5], -2.0);
        assert!(row_sums(&tg.matrix).iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn truncation_errors() {
        assert!(truncate(&Generator::reset_one_or_advance(), 1).is_err());
        assert!(truncate(&Generator::reset_two_or_advance(), 2).is_err());
        assert!(truncate(&Generator::reset_two_or_advance(), 3).is_ok());
    }

    #[test]
    fn finite_generator_clamps_level() {
        let g = Generator::from_triplets(&[
            Triplet { i: Mode::of(1), j: Mode::of(2), rate: 1.0 },
            Triplet { i: Mode::of(2), j: Mode::of(3), rate: 2.0 },
            Triplet { i: Mode::of(3), j: Mode::of(1), rate: 0.5 },
        ])
        .unwrap();
        let tg = truncate(&g, 10).unwrap();
        assert_eq!(tg.level, 3);
        assert!(tg.exact);
    }

    #[test]
    fn reducible_is_rejected() {
        let g = Generator::from_triplets(&[
            Triplet { i: Mode::of(1), j: Mode::of(2), rate: 1.0 },
            Triplet { i: Mode::of(3), j: Mode::of(2), rate: 1.0 },
        ])
        .unwrap();
        let tg = truncate(&g, 3).unwrap();
        assert!(matches!(stationary(&tg), Err(Error::Reducible { .. })));
    }

    #[test]
    fn negative_rate_rejected() {
        assert!(Generator::from_triplets(&[Triplet {
            i: Mode::of(1),
            j: Mode::of(2),
            rate: -1.0
        }])
        .is_err());
    }

    #[test]
    fn sweep_finite_generator_is_flat() {
        let mut t = Vec::new();
        for i in 1..=5usize {
            let j = i % 5 + 1;
            t.push(Triplet { i: Mode::of(i), j: Mode::of(j), rate: i as f64 });
            t.push(Triplet { i: Mode::of(j), j: Mode::of(i), rate: 0.5 });
        }
        let g = Generator::from_triplets(&t).unwrap();
        let rows = convergence_sweep(&g, &[5, 8, 12]).unwrap();
        assert_eq!(rows[0].l1_change, None);
        assert_eq!(rows[1].l1_change, Some(0.0));
        assert_eq!(rows[2].l1_change, Some(0.0));
        assert!(convergence_sweep(&g, &[8, 5]).is_err());
    }

    #[test]
    fn generator_file_forms() {
        let f: GeneratorFile = serde_json::from_str(r#"{"family": "reset_one_or_advance"}"#).unwrap();
        assert_eq!(f.build().unwrap().name(), "reset_one_or_advance");
        let f: GeneratorFile =
            serde_json::from_str(r#"{"triplets": [{"i": 1, "j": 2, "rate": 1.0}, {"i": 2, "j": 1, "rate": 3.0}]}"#)
                .unwrap();
        assert_eq!(f.build().unwrap().size(), Some(2));
        let f: GeneratorFile = serde_json::from_str(r#"{}"#).unwrap();
        assert!(f.build().is_err());
    }

    #[test]
    fn tail_skips_underflowed_entries() {
        let nu = [0.5, 0.25, 0.125, 0.0625, 0.0];
        let (r, mass) = geometric_tail(&nu).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert!((mass - 0.0625).abs() < 1e-15);
        let under = [0.9, 0.09, 0.009, 0.0, 0.0, 0.0];
        let (r, mass) = geometric_tail(&under).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
        assert!((mass - 0.001).abs() < 1e-12);
        assert!(geometric_tail(&[0.2, 0.3, 0.5]).is_none());
        assert!(geometric_tail(&[1.0, 0.0, 0.0]).is_none());
    }
}
