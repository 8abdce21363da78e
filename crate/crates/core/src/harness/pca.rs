//! Two-component PCA by power iteration with deflation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const POWER_MAX_ITERS: usize = 200_000;
const POWER_TOL: f64 = 1e-14;
/// Relative eigenvalue floor below which the second axis is arbitrary.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
    /// The data does not span two directions; the second axis is then an
    /// arbitrary unit vector orthogonal to the first.
    pub rank_deficient: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(m: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

/// Dominant eigenpair of a symmetric PSD matrix, iterating inside the
/// orthogonal complement of `against`.
fn power_iteration(cov: &[f64], d: usize, against: Option<&[f64]>) -> (Vec<f64>, f64) {
    // twice, so that rounding leaves no component along `against`
    let project_out = |v: &mut Vec<f64>| {
        if let Some(u) = against {
            for _ in 0..2 {
                let c = dot(v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
    };
    let scale = cov.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let negligible = |n: f64| n <= 1e-13 * scale;
    // start from the largest-norm column, with a tie-breaking tilt
    let mut v: Vec<f64> = (0..d)
        .max_by(|&i, &j| norm(&cov[i * d..(i + 1) * d]).total_cmp(&norm(&cov[j * d..(j + 1) * d])))
        .map(|i| cov[i * d..(i + 1) * d].iter().enumerate().map(|(k, x)| x + 1e-3 * (k as f64 + 1.0)).collect())
        .unwrap_or_default();
    project_out(&mut v);
    let n0 = norm(&v);
    if n0 == 0.0 || (against.is_some() && negligible(n0)) {
        return (v, 0.0);
    }
    v.iter_mut().for_each(|x| *x /= n0);
    for _ in 0..POWER_MAX_ITERS {
        let mut w = mat_vec(cov, d, &v);
        project_out(&mut w);
        let n = norm(&w);
        if n == 0.0 || negligible(n) {
            return (v, 0.0);
        }
        w.iter_mut().for_each(|x| *x /= n);
        let change = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if change < POWER_TOL {
            break;
        }
    }
    let lambda = dot(&v, &mat_vec(cov, d, &v));
    (v, lambda)
}

/// Fits the top-2 principal axes of `data` (rows are samples).
pub fn pca_fit(data: &[Vec<f64>]) -> Result<Pca> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Invalid("pca needs at least two rows".into()));
    }
    let d = data[0].len();
    if d < 2 {
        return Err(Error::Invalid("pca needs at least two columns".into()));
    }
    if data.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension { expected: d, got: data.iter().map(|r| r.len()).find(|&l| l != d).unwrap_or(d) });
    }
    if data.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("pca data must be finite".into()));
    }
    let mut mean = vec![0.0; d];
    for row in data {
        mean.iter_mut().zip(row).for_each(|(m, x)| *m += x / n as f64);
    }
    let mut cov = vec![0.0; d * d];
    for row in data {
        let c: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += c[i] * c[j] / (n - 1) as f64;
            }
        }
    }
    let (mut axis1, lambda1) = power_iteration(&cov, d, None);
    if lambda1 == 0.0 {
        axis1 = (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    }
    let (mut axis2, mut lambda2) = power_iteration(&cov, d, Some(&axis1));
    let rank_deficient = !(lambda2 > RANK_TOL * lambda1.max(f64::MIN_POSITIVE)) || norm(&axis2) == 0.0;
    if rank_deficient {
        // least-aligned basis vector, orthogonalized against the first axis
        let k = (0..d).min_by(|&i, &j| axis1[i].abs().total_cmp(&axis1[j].abs())).unwrap();
        let mut e: Vec<f64> = (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        let c = dot(&e, &axis1);
        e.iter_mut().zip(&axis1).for_each(|(x, y)| *x -= c * y);
        let ne = norm(&e);
        e.iter_mut().for_each(|x| *x /= ne);
        axis2 = e;
        lambda2 = lambda2.max(0.0);
    }
    Ok(Pca { mean, axes: [axis1, axis2], eigenvalues: [lambda1, lambda2], rank_deficient })
}

impl Pca {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<[f64; 2]> {
        crate::error::check_len(self.dim(), x.len())?;
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok([dot(&c, &self.axes[0]), dot(&c, &self.axes[1])])
    }

    /// `mean + u * axis1 + v * axis2`.
    pub fn inverse(&self, u: f64, v: f64) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mean[i] + u * self.axes[0][i] + v * self.axes[1][i]).collect()
    }
}
