//! Thin SVD by one-sided (Hestenes) Jacobi rotations, and the
//! Moore–Penrose pseudo-inverse built on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `m = u · diag(d) · vᵀ` with `r = min(rows, cols)`.
///
/// Sign convention: the largest-magnitude entry of every `u` column is
/// positive (first such entry on ties); `v` columns follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdFactors {
    #[serde(with = "crate::serde_mat")]
    pub u: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub d: DVector<f64>,
    #[serde(with = "crate::serde_mat")]
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn rank(&self, rel_tol: f64) -> usize {
        let dmax = self.d.iter().cloned().fold(0.0, f64::max);
        self.d
            .iter()
            .filter(|&&s| s > rel_tol * dmax && s > 0.0)
            .count()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.d.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

pub fn svd(m: &DMatrix<f64>) -> Result<SvdFactors> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Dimension("svd of an empty matrix".to_string()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "svd input contains non-finite values".to_string(),
        ));
    }
    let (u, d, v) = if m.nrows() >= m.ncols() {
        jacobi_tall(m)
    } else {
        let (u, d, v) = jacobi_tall(&m.transpose());
        (v, d, u)
    };
    let mut f = SvdFactors { u, d, v };
    fix_signs(&mut f);
    Ok(f)
}

/// One-sided Jacobi on a tall matrix (rows ≥ cols).
fn jacobi_tall(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let eps = f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let wi = w[(r, i)];
                    let wj = w[(r, j)];
                    alpha += wi * wi;
                    beta += wj * wj;
                    gamma += wi * wj;
                }
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let wi = w[(r, i)];
                    let wj = w[(r, j)];
                    w[(r, i)] = c * wi - s * wj;
                    w[(r, j)] = s * wi + c * wj;
                }
                for r in 0..cols {
                    let vi = v[(r, i)];
                    let vj = v[(r, j)];
                    v[(r, i)] = c * vi - s * vj;
                    v[(r, j)] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let smax = norms[order[0]];
    let cutoff = smax * (rows.max(cols) as f64) * eps;
    let mut u = DMatrix::<f64>::zeros(rows, cols);
    let mut d = DVector::<f64>::zeros(cols);
    let mut vs = DMatrix::<f64>::zeros(cols, cols);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        vs.set_column(k, &v.column(j));
        if norms[j] > cutoff && norms[j] > 0.0 {
            d[k] = norms[j];
            u.set_column(k, &(w.column(j) / norms[j]));
        } else {
            d[k] = 0.0;
            deficient.push(k);
        }
    }
    complete_orthonormal(&mut u, &deficient);
    (u, d, vs)
}

/// Fills the listed columns with unit vectors orthogonal to all others.
fn complete_orthonormal(u: &mut DMatrix<f64>, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let rows = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|c| !missing.contains(c)).collect();
    let mut candidate = 0;
    for &col in missing {
        loop {
            assert!(candidate < rows, "cannot complete orthonormal basis");
            let mut e = DVector::<f64>::zeros(rows);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let proj = u.column(f).dot(&e);
                    e -= u.column(f) * proj;
                }
            }
            let nrm = e.norm();
            if nrm > 1e-8 {
                u.set_column(col, &(e / nrm));
                filled.push(col);
                break;
            }
        }
    }
}

fn fix_signs(f: &mut SvdFactors) {
    for j in 0..f.u.ncols() {
        let mut best = 0;
        for i in 1..f.u.nrows() {
            if f.u[(i, j)].abs() > f.u[(best, j)].abs() {
                best = i;
            }
        }
        if f.u[(best, j)] < 0.0 {
            f.u.column_mut(j).neg_mut();
            f.v.column_mut(j).neg_mut();
        }
    }
}

/// Default relative cutoff for [`pseudo_inverse`].
pub const PINV_RTOL: f64 = 1e-12;

/// Moore–Penrose pseudo-inverse; singular values at or below `tol · d_max`
/// are treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let f = svd(m)?;
    let dmax = f.d.iter().cloned().fold(0.0, f64::max);
    let mut vs = f.v.clone();
    for (j, &s) in f.d.iter().enumerate() {
        let inv = if s > tol * dmax && s > 0.0 {
            1.0 / s
        } else {
            0.0
        };
        vs.column_mut(j).scale_mut(inv);
    }
    Ok(vs * f.u.transpose())
}
