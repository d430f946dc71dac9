//! Sparse PCA by alternating minimization of the elastic-net regression
//! formulation:
//!
//! ```text
//! min_{A,B}  Σ_i ‖m_i − A Bᵀ m_i‖² + λ Σ_j ‖B_j‖² + Σ_j λ1_j ‖B_j‖₁   s.t. AᵀA = I
//! ```
//!
//! where `m_i` are the rows of `m`. With `A` fixed the problem splits into
//! `k` independent elastic-net problems in the Gram matrix `G = mᵀm`; with
//! `B` fixed the optimal `A` is the orthogonal Procrustes solution `U Vᵀ`
//! from the SVD of `G B`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::svd::svd;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpcaOptions {
    pub max_iter: usize,
    /// Stop when the relative objective change drops below this.
    pub tol: f64,
    /// Coordinate-descent stopping threshold on the largest coefficient move.
    pub cd_tol: f64,
    pub cd_max_sweeps: usize,
}

impl Default for SpcaOptions {
    fn default() -> Self {
        SpcaOptions {
            max_iter: 200,
            tol: 1e-6,
            cd_tol: 1e-12,
            cd_max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpcaFactors {
    /// p×k, orthonormal columns.
    #[serde(with = "crate::serde_mat")]
    pub a: DMatrix<f64>,
    /// p×k sparse loadings.
    #[serde(with = "crate::serde_mat")]
    pub b: DMatrix<f64>,
    pub lambda: f64,
    pub lambda1: Vec<f64>,
    /// Objective after initialization, then after every full iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub fn sparse_pca(m: &DMatrix<f64>, k: usize, lambda: f64, lambda1: &[f64]) -> Result<SpcaFactors> {
    sparse_pca_with(m, k, lambda, lambda1, &SpcaOptions::default())
}

pub fn sparse_pca_with(
    m: &DMatrix<f64>,
    k: usize,
    lambda: f64,
    lambda1: &[f64],
    opts: &SpcaOptions,
) -> Result<SpcaFactors> {
    let (rows, p) = m.shape();
    if k == 0 || k > rows.min(p) {
        return Err(Error::Dimension(format!(
            "sparse PCA rank {k} outside 1..={}",
            rows.min(p)
        )));
    }
    if lambda1.len() != k {
        return Err(Error::Dimension(format!(
            "{} L1 weights for {k} components",
            lambda1.len()
        )));
    }
    if !(lambda >= 0.0) || lambda1.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config(
            "sparse PCA penalties must be >= 0".to_string(),
        ));
    }

    let init = svd(m)?;
    let mut a = init.v.columns(0, k).into_owned();
    let mut b = a.clone();
    let gram = m.transpose() * m;

    let mut trace = vec![spca_objective(m, &a, &b, lambda, lambda1)];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        for j in 0..k {
            let target = &gram * a.column(j);
            let mut beta: DVector<f64> = b.column(j).into_owned();
            elastic_net_cd(&gram, &target, lambda, lambda1[j], &mut beta, opts);
            b.set_column(j, &beta);
        }
        a = procrustes(&(&gram * &b))?;

        let obj = spca_objective(m, &a, &b, lambda, lambda1);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(obj);
        let scale = prev.abs().max(f64::MIN_POSITIVE);
        if (prev - obj).abs() / scale < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(SpcaFactors {
        a,
        b,
        lambda,
        lambda1: lambda1.to_vec(),
        objective_trace: trace,
        converged,
        iterations,
    })
}

/// The penalized reconstruction objective, evaluated directly.
pub fn spca_objective(
    m: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lambda: f64,
    lambda1: &[f64],
) -> f64 {
    let resid = m - m * b * a.transpose();
    let mut obj = resid.norm_squared();
    for (j, l1) in lambda1.iter().enumerate() {
        let col = b.column(j);
        obj += lambda * col.norm_squared() + l1 * col.lp_norm(1);
    }
    obj
}

/// Minimizes `βᵀ(G + λI)β − 2 cᵀβ + λ1 ‖β‖₁` by cyclic coordinate descent,
/// starting from the incoming `beta`.
fn elastic_net_cd(
    gram: &DMatrix<f64>,
    target: &DVector<f64>,
    lambda: f64,
    lambda1: f64,
    beta: &mut DVector<f64>,
    opts: &SpcaOptions,
) {
    let p = beta.len();
    let half_l1 = 0.5 * lambda1;
    for _ in 0..opts.cd_max_sweeps {
        let mut max_move: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for t in 0..p {
            let denom = gram[(t, t)] + lambda;
            let mut partial = target[t];
            for s in 0..p {
                if s != t {
                    partial -= gram[(t, s)] * beta[s];
                }
            }
            let new = if denom > 0.0 {
                soft_threshold(partial, half_l1) / denom
            } else {
                0.0
            };
            max_move = max_move.max((new - beta[t]).abs());
            max_abs = max_abs.max(new.abs());
            beta[t] = new;
        }
        if max_move <= opts.cd_tol * max_abs.max(1.0) {
            break;
        }
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// `argmax_{AᵀA=I} tr(Aᵀ C)` = `U Vᵀ` for `C = U D Vᵀ`.
fn procrustes(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let f = svd(c)?;
    Ok(&f.u * f.v.transpose())
}
