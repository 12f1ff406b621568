//! Memory segment `X_t = {X(t+s) : -r <= s <= 0}` on a fixed uniform grid.
//!
//! The segment is a ring buffer of `r/dt + 1` samples, oldest first. Pushing a
//! new sample drops the oldest one. The sup norm is tracked with a monotone
//! queue so it costs O(1) amortized per push; rate functions that depend on
//! `||X_t||` are evaluated every simulation step.

use std::collections::VecDeque;

use crate::error::{Error, Result};

const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Segment {
    delay: f64,
    step: f64,
    dim: usize,
    len: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
    /// Physical slot of the oldest sample.
    head: usize,
    /// Logical index of the oldest sample; increases by one per push.
    base: u64,
    /// (logical index, norm), norms strictly decreasing front to back.
    max_queue: VecDeque<(u64, f64)>,
}

/// Number of grid intervals in `[-delay, 0]`, validating that `delay` is an
/// integer multiple of `step`.
pub fn grid_intervals(delay: f64, step: f64) -> Result<usize> {
    if !(delay > 0.0 && delay.is_finite()) {
        return Err(Error::InvalidArgument(format!("delay must be positive, got {delay}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid step must be positive, got {step}")));
    }
    let ratio = delay / step;
    let m = ratio.round();
    if (ratio - m).abs() > GRID_TOL || m < 1.0 {
        return Err(Error::NonIntegralGrid { delay, step });
    }
    Ok(m as usize)
}

fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Segment {
    /// Constant initial history `xi(t) = phi0` on `[-delay, 0]`.
    pub fn constant(phi0: &[f64], delay: f64, step: f64) -> Result<Segment> {
        let m = grid_intervals(delay, step)?;
        let samples = vec![phi0.to_vec(); m + 1];
        Segment::from_samples(&samples, delay, step)
    }

    /// Builds a segment from explicit samples, oldest first.
    pub fn from_samples(samples: &[Vec<f64>], delay: f64, step: f64) -> Result<Segment> {
        let m = grid_intervals(delay, step)?;
        if samples.len() != m + 1 {
            return Err(Error::DimensionMismatch {
                expected: m + 1,
                got: samples.len(),
            });
        }
        let dim = samples[0].len();
        if dim == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        let mut seg = Segment {
            delay,
            step,
            dim,
            len: m + 1,
            data: Vec::with_capacity((m + 1) * dim),
            norms: Vec::with_capacity(m + 1),
            head: 0,
            base: 0,
            max_queue: VecDeque::new(),
        };
        for (k, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: s.len() });
            }
            seg.data.extend_from_slice(s);
            let n = euclid(s);
            seg.norms.push(n);
            seg.enqueue_norm(k as u64, n);
        }
        Ok(seg)
    }

    fn enqueue_norm(&mut self, logical: u64, norm: f64) {
        while self.max_queue.back().is_some_and(|&(_, v)| v <= norm) {
            self.max_queue.pop_back();
        }
        self.max_queue.push_back((logical, norm));
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored samples, `r/dt + 1`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sample `k` counted from the oldest (`k = 0` is `s = -r`).
    pub fn sample(&self, k: usize) -> &[f64] {
        debug_assert!(k < self.len);
        let slot = (self.head + k) % self.len;
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    fn sample_norm(&self, k: usize) -> f64 {
        self.norms[(self.head + k) % self.len]
    }

    /// `phi(0)`.
    pub fn newest(&self) -> &[f64] {
        self.sample(self.len - 1)
    }

    /// `phi(-r)`.
    pub fn oldest(&self) -> &[f64] {
        self.sample(0)
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len).map(move |k| self.sample(k))
    }

    /// Advances the window by one grid step.
    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let slot = self.head;
        self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(x);
        let n = euclid(x);
        self.norms[slot] = n;
        self.head = (self.head + 1) % self.len;
        self.base += 1;
        let newest_logical = self.base + self.len as u64 - 1;
        self.enqueue_norm(newest_logical, n);
        while self.max_queue.front().is_some_and(|&(idx, _)| idx < self.base) {
            self.max_queue.pop_front();
        }
        Ok(())
    }

    /// `||phi|| = max_k |phi(s_k)|` over the grid samples. The piecewise
    /// linear interpolant attains its sup at a grid point.
    pub fn sup_norm(&self) -> f64 {
        self.max_queue.front().map_or(0.0, |&(_, v)| v)
    }

    /// Smallest sample norm in the window, `min_k |phi(s_k)|`.
    pub fn inf_norm(&self) -> f64 {
        (0..self.len).map(|k| self.sample_norm(k)).fold(f64::INFINITY, f64::min)
    }

    /// Bracketing samples and interpolation weight for `s`.
    fn locate(&self, s: f64) -> Result<(usize, usize, f64)> {
        let slack = GRID_TOL * self.step;
        if !(s >= -self.delay - slack && s <= slack) {
            return Err(Error::OutsideWindow { s, delay: self.delay });
        }
        let last = self.len - 1;
        let pos = ((s + self.delay) / self.step).clamp(0.0, last as f64);
        let nearest = pos.round();
        if (pos - nearest).abs() <= GRID_TOL {
            let k = nearest as usize;
            return Ok((k, k, 0.0));
        }
        let lo = pos.floor() as usize;
        Ok((lo, lo + 1, pos - lo as f64))
    }

    /// `phi(s)` by linear interpolation; exact at grid points.
    pub fn value_at(&self, s: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.value_at_into(s, &mut out)?;
        Ok(out)
    }

    pub fn value_at_into(&self, s: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: out.len() });
        }
        let (lo, hi, w) = self.locate(s)?;
        let a = self.sample(lo);
        let b = self.sample(hi);
        for c in 0..self.dim {
            out[c] = if w == 0.0 { a[c] } else { (1.0 - w) * a[c] + w * b[c] };
        }
        Ok(())
    }

    /// Component `c` of `phi(s)`.
    pub fn component_at(&self, s: f64, c: usize) -> Result<f64> {
        if c >= self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: c + 1 });
        }
        let (lo, hi, w) = self.locate(s)?;
        let a = self.sample(lo)[c];
        Ok(if w == 0.0 { a } else { (1.0 - w) * a + w * self.sample(hi)[c] })
    }

    /// `sum_k w_k phi(s_k)` for a discrete measure given as `(s_k, w_k)` pairs.
    pub fn integrate_against(&self, weights: &[(f64, f64)]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        let mut v = vec![0.0; self.dim];
        for &(s, w) in weights {
            self.value_at_into(s, &mut v)?;
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += w * x;
            }
        }
        Ok(acc)
    }

    /// Same as [`Segment::integrate_against`] for one component, without
    /// allocating.
    pub fn integrate_component(&self, weights: &[(f64, f64)], c: usize) -> Result<f64> {
        weights
            .iter()
            .try_fold(0.0, |acc, &(s, w)| Ok(acc + w * self.component_at(s, c)?))
    }

    /// Grid offsets `s_k = -r + k dt`, oldest first.
    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| -self.delay + k as f64 * self.step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(samples: &[f64], delay: f64, step: f64) -> Segment {
        let s: Vec<Vec<f64>> = samples.iter().map(|&v| vec![v]).collect();
        Segment::from_samples(&s, delay, step).unwrap()
    }

    fn as_scalars(seg: &Segment) -> Vec<f64> {
        seg.samples().map(|s| s[0]).collect()
    }

    #[test]
    fn constant_fill() {
        let seg = Segment::constant(&[2.0], 1.0, 0.5).unwrap();
        assert_eq!(as_scalars(&seg), vec![2.0, 2.0, 2.0]);
        for s in [-1.0, -0.7, -0.5, -0.1, 0.0] {
            assert_eq!(seg.value_at(s).unwrap(), vec![2.0]);
        }
        assert_eq!(seg.sup_norm(), 2.0);
    }

    #[test]
    fn constant_rejects_bad_grid() {
        assert!(matches!(
            Segment::constant(&[1.0], 1.0, 0.3),
            Err(Error::NonIntegralGrid { .. })
        ));
        assert!(Segment::constant(&[1.0], 0.0, 0.1).is_err());
        assert!(Segment::constant(&[1.0], 1.0, -0.1).is_err());
        // 1/0.001 is not exactly 1000 in binary but well within tolerance.
        assert_eq!(Segment::constant(&[1.0], 1.0, 0.001).unwrap().len(), 1001);
    }

    #[test]
    fn push_drops_oldest() {
        let mut seg = scalar(&[1.0, 2.0, 3.0], 1.0, 0.5);
        seg.push(&[4.0]).unwrap();
        assert_eq!(as_scalars(&seg), vec![2.0, 3.0, 4.0]);
        assert_eq!(seg.newest(), &[4.0]);
        assert_eq!(seg.oldest(), &[2.0]);

        let mut seg = scalar(&[1.0, 2.0, 3.0], 1.0, 0.5);
        seg.push(&[9.0]).unwrap();
        assert_eq!(seg.sup_norm(), 9.0);

        assert!(matches!(
            seg.push(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn full_window_of_zeros() {
        let mut seg = scalar(&[5.0, -7.0, 3.0, 1.0, 2.0], 2.0, 0.5);
        for _ in 0..seg.len() {
            seg.push(&[0.0]).unwrap();
        }
        assert!(seg.samples().all(|s| s[0] == 0.0));
        assert_eq!(seg.sup_norm(), 0.0);
    }

    #[test]
    fn interpolation() {
        let seg = scalar(&[0.0, 2.0], 1.0, 1.0);
        assert_eq!(seg.value_at(-0.5).unwrap(), vec![1.0]);
        assert_eq!(seg.value_at(0.0).unwrap(), vec![2.0]);
        assert_eq!(seg.value_at(-1.0).unwrap(), vec![0.0]);
        assert!(matches!(seg.value_at(0.1), Err(Error::OutsideWindow { .. })));
        assert!(matches!(seg.value_at(-1.5), Err(Error::OutsideWindow { .. })));
    }

    #[test]
    fn euclidean_sup_norm() {
        let seg = Segment::from_samples(&[vec![3.0, 4.0], vec![0.0, 0.0]], 1.0, 1.0).unwrap();
        assert_eq!(seg.sup_norm(), 5.0);
        let zero = Segment::constant(&[0.0, 0.0], 1.0, 0.25).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
        let c = Segment::constant(&[-3.0, 4.0], 1.0, 0.25).unwrap();
        assert_eq!(c.sup_norm(), 5.0);
    }

    #[test]
    fn discrete_measures() {
        let seg = scalar(&[0.0, 4.0], 1.0, 1.0);
        assert_eq!(seg.integrate_against(&[(-1.0, 1.0)]).unwrap(), vec![0.0]);
        assert_eq!(
            seg.integrate_against(&[(-1.0, 0.5), (0.0, 0.5)]).unwrap(),
            vec![2.0]
        );
        assert_eq!(seg.integrate_against(&[]).unwrap(), vec![0.0]);
        assert!(seg.integrate_against(&[(-2.0, 1.0)]).is_err());
        assert_eq!(seg.integrate_component(&[(-0.25, 2.0)], 0).unwrap(), 6.0);
    }

    fn arb_segment() -> impl Strategy<Value = Segment> {
        (1usize..12, 1usize..4).prop_flat_map(|(m, dim)| {
            prop::collection::vec(prop::collection::vec(-50.0f64..50.0, dim), m + 1)
                .prop_map(move |s| Segment::from_samples(&s, m as f64 * 0.25, 0.25).unwrap())
        })
    }

    proptest! {
        #[test]
        fn sup_norm_matches_scan(seg in arb_segment(), pushes in prop::collection::vec(-80.0f64..80.0, 0..40)) {
            let mut seg = seg;
            let d = seg.dim();
            for p in pushes {
                let x: Vec<f64> = (0..d).map(|c| p * (c as f64 + 1.0) / d as f64).collect();
                seg.push(&x).unwrap();
                let scan = seg.samples().map(euclid).fold(0.0, f64::max);
                prop_assert_eq!(seg.sup_norm(), scan);
            }
        }

        #[test]
        fn interpolant_in_convex_hull(seg in arb_segment(), frac in 0.0f64..=1.0) {
            let s = -seg.delay() * frac;
            let v = seg.value_at(s).unwrap();
            let pos = (s + seg.delay()) / seg.step();
            let lo = (pos.floor() as usize).min(seg.len() - 1);
            let hi = (lo + 1).min(seg.len() - 1);
            for c in 0..seg.dim() {
                let (a, b) = (seg.sample(lo)[c], seg.sample(hi)[c]);
                prop_assert!(v[c] >= a.min(b) - 1e-9 && v[c] <= a.max(b) + 1e-9);
            }
            // grid points are exact
            for (k, s) in seg.grid().enumerate() {
                prop_assert_eq!(seg.value_at(s).unwrap(), seg.sample(k).to_vec());
            }
            prop_assert!(seg.sup_norm() >= euclid(&v) - 1e-9);
        }

        #[test]
        fn integration_linear_in_weights(seg in arb_segment(), w1 in -3.0f64..3.0, w2 in -3.0f64..3.0, f in 0.0f64..1.0) {
            let s = -seg.delay() * f;
            let a = seg.integrate_against(&[(s, w1)]).unwrap();
            let b = seg.integrate_against(&[(s, w2)]).unwrap();
            let ab = seg.integrate_against(&[(s, w1 + w2)]).unwrap();
            for c in 0..seg.dim() {
                prop_assert!((a[c] + b[c] - ab[c]).abs() < 1e-9);
            }
        }
    }
}
