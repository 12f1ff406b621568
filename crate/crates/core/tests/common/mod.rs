//! Independent reference computations used by the integration tests. None of
//! these call into the library's numerical code.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| r.random_range(-1.0..1.0) + if i == j { shift } else { 0.0 }).collect())
        .collect()
}

pub fn to_dmatrix(a: &Mat) -> nalgebra::DMatrix<f64> {
    let n = a.len();
    nalgebra::DMatrix::from_fn(n, a[0].len(), |i, j| a[i][j])
}

pub fn sym(a: &Mat) -> Mat {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| 0.5 * (a[i][j] + a[j][i])).collect()).collect()
}

/// Cyclic Jacobi rotations; eigenvalues in ascending order.
pub fn jacobi_eigenvalues(s: &Mat) -> Vec<f64> {
    let n = s.len();
    let mut a = s.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s_ = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s_ * akq;
                    a[k][q] = s_ * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s_ * aqk;
                    a[q][k] = s_ * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn quad(a: &Mat, x: &[f64]) -> f64 {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| x[i] * a[i][j] * x[j]).sum::<f64>()).sum()
}

fn normalize(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

/// `inf |x^T A x|` over the unit sphere: the minimum over `n_dirs` uniform
/// directions, then projected gradient steps from the best few samples.
pub fn sphere_rho(a: &Mat, n_dirs: usize, seed: u64) -> f64 {
    let n = a.len();
    let mut r = rng(seed);
    let normal = rand_distr::StandardNormal;
    let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
    for _ in 0..n_dirs {
        let mut x: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(normal)).collect();
        normalize(&mut x);
        let v = quad(a, &x).abs();
        if best.len() < 8 || v < best[best.len() - 1].0 {
            best.push((v, x));
            best.sort_by(|p, q| p.0.total_cmp(&q.0));
            best.truncate(8);
        }
    }
    let s = sym(a);
    let scale: f64 = s.iter().flatten().map(|v| v.abs()).sum::<f64>().max(1e-12);
    let mut out = best[0].0;
    for (_, mut x) in best {
        let mut step = 0.25 / scale;
        let mut f = quad(&s, &x).abs();
        for _ in 0..20_000 {
            let q = quad(&s, &x);
            let sx: Vec<f64> = (0..n).map(|i| (0..n).map(|j| s[i][j] * x[j]).sum()).collect();
            // gradient of |q| tangent to the sphere
            let g: Vec<f64> = (0..n).map(|i| 2.0 * q.signum() * (sx[i] - q * x[i])).collect();
            let mut y: Vec<f64> = (0..n).map(|i| x[i] - step * g[i]).collect();
            normalize(&mut y);
            let fy = quad(&s, &y).abs();
            if fy < f {
                x = y;
                f = fy;
                step *= 1.2;
            } else {
                step *= 0.5;
                if step < 1e-18 {
                    break;
                }
            }
        }
        out = out.min(f);
    }
    out
}

/// Stationary law of a finite generator by uniformization and power
/// iteration: `nu <- nu (I + Q / c)` until the update stalls.
pub fn stationary_power(q: &Mat) -> Vec<f64> {
    let n = q.len();
    let c = (0..n).map(|i| -q[i][i]).fold(0.0, f64::max) * 1.05 + 1e-12;
    let mut nu = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| nu[i] * (if i == j { 1.0 } else { 0.0 } + q[i][j] / c)).sum())
            .collect();
        let diff: f64 = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum();
        let total: f64 = next.iter().sum();
        nu = next.into_iter().map(|v| v / total).collect();
        if diff < 1e-16 {
            break;
        }
    }
    nu
}

/// Limit generator of the switched OU family on `1..=n`: unit rates to each of 1, 2 and
/// `i + 1` other than `i` itself, plus `1 -> 3`; rates past `n` fold into `n`.
pub fn reset_two_or_advance_matrix(n: usize) -> Mat {
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        let targets: &[usize] = match i {
            0 => &[1, 2],
            1 => &[0, 2],
            _ => &[0, 1, i + 1],
        };
        for &j in targets {
            let j = j.min(n - 1);
            if j != i {
                q[i][j] += 1.0;
            }
        }
        q[i][i] = -q[i].iter().sum::<f64>();
    }
    q
}

/// Limit generator of the controlled scalar family: from `i` jump to 1 (if `i > 1`) and to `i + 1`,
/// each at rate 1.
pub fn reset_one_or_advance_matrix(n: usize) -> Mat {
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in [0usize, i + 1] {
            let j = j.min(n - 1);
            if j != i {
                q[i][j] += 1.0;
            }
        }
        q[i][i] = -q[i].iter().sum::<f64>();
    }
    q
}

/// Wilson score interval at 95%.
pub fn wilson(hits: u64, n: u64) -> (f64, f64) {
    let z = 1.959963984540054;
    let n = n as f64;
    let p = hits as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (centre - half, centre + half)
}
