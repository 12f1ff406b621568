//! Mode indices, per-mode coefficient tables and sparse rate rows.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A switching mode. Modes are the positive integers 1, 2, 3, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Mode(usize);

impl Mode {
    pub const FIRST: Mode = Mode(1);

    pub fn new(i: usize) -> Option<Mode> {
        (i >= 1).then_some(Mode(i))
    }

    /// Panics on 0; for literals and loop indices known to be positive.
    pub fn of(i: usize) -> Mode {
        Mode::new(i).expect("modes are numbered from 1")
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based position, for indexing dense arrays.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn next(self) -> Mode {
        Mode(self.0 + 1)
    }

    pub fn prev(self) -> Option<Mode> {
        Mode::new(self.0 - 1)
    }
}

impl TryFrom<usize> for Mode {
    type Error = String;
    fn try_from(i: usize) -> Result<Self, Self::Error> {
        Mode::new(i).ok_or_else(|| "mode indices start at 1".to_string())
    }
}

impl From<Mode> for usize {
    fn from(m: Mode) -> usize {
        m.0
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Coefficients indexed by mode, given as a finite head whose last entry
/// repeats for every later mode. This is how bounded-in-`i` families over the
/// countable mode space are represented.
#[derive(Debug, Clone, PartialEq)]
pub struct PerMode<T> {
    head: Vec<T>,
}

impl<T> PerMode<T> {
    pub fn new(head: Vec<T>) -> Option<Self> {
        (!head.is_empty()).then_some(PerMode { head })
    }

    pub fn constant(value: T) -> Self {
        PerMode { head: vec![value] }
    }

    pub fn get(&self, mode: Mode) -> &T {
        let idx = mode.index().min(self.head.len() - 1);
        &self.head[idx]
    }

    /// Modes covered explicitly; every mode past this shares the last value.
    pub fn head_len(&self) -> usize {
        self.head.len()
    }

    pub fn head(&self) -> &[T] {
        &self.head
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> PerMode<U> {
        PerMode {
            head: self.head.iter().map(f).collect(),
        }
    }
}

/// Off-diagonal rates `q_ij` of one generator row, as `(j, rate)` pairs.
///
/// Reused across steps so rate evaluation in the simulation loop does not
/// allocate once the buffer has grown to the row's support.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateRow {
    entries: Vec<(Mode, f64)>,
}

impl RateRow {
    pub fn new() -> Self {
        RateRow::default()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Adds `rate` to the entry for `to`, creating it if needed. Zero rates
    /// are dropped.
    pub fn add(&mut self, to: Mode, rate: f64) {
        if rate == 0.0 {
            return;
        }
        match self.entries.iter_mut().find(|(j, _)| *j == to) {
            Some((_, r)) => *r += rate,
            None => self.entries.push((to, rate)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn rate_to(&self, to: Mode) -> f64 {
        self.entries
            .iter()
            .find(|(j, _)| *j == to)
            .map_or(0.0, |(_, r)| *r)
    }

    /// `q_i = sum_{j != i} q_ij`.
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, r)| r).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Picks the target whose cumulative rate interval contains `u`, or
    /// `None` when `u` falls past the row total (a rejected thinning event).
    pub fn select(&self, u: f64) -> Option<Mode> {
        let mut acc = 0.0;
        for &(j, r) in &self.entries {
            acc += r;
            if u < acc {
                return Some(j);
            }
        }
        None
    }
}
