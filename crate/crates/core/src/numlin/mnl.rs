//! Multinomial-logit maximum likelihood.
//!
//! `P(G = g | x) = exp(θ_g · [1, x]) / Σ_h exp(θ_h · [1, x])`, with the last
//! category as reference (`θ_{M-1} = 0`). The objective minimized is the
//! negative log-likelihood plus `reg/2` times the squared norm of the slope
//! coefficients (intercepts are not penalized).
//!
//! The optimizer works on z-scored covariates with L-BFGS and maps the
//! solution back; the stopping rule is evaluated on the gradient in the
//! original coordinates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MnlOptions {
    pub reg: f64,
    /// Gradient ∞-norm target.
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

impl Default for MnlOptions {
    fn default() -> Self {
        MnlOptions {
            reg: 1e-8,
            tol: 1e-6,
            max_iter: 500,
            memory: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlModel {
    /// M×(p+1); column 0 is the intercept, the last row is identically zero.
    #[serde(with = "crate::serde_mat")]
    pub theta: DMatrix<f64>,
    pub reg: f64,
    pub converged: bool,
    /// ∞-norm of the objective gradient at `theta`.
    pub grad_norm: f64,
    pub iterations: usize,
}

impl MnlModel {
    pub fn n_categories(&self) -> usize {
        self.theta.nrows()
    }

    /// Class probabilities at one covariate vector.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let m = self.theta.nrows();
        let logits: Vec<f64> = (0..m)
            .map(|g| {
                self.theta[(g, 0)]
                    + x.iter()
                        .enumerate()
                        .map(|(j, v)| self.theta[(g, j + 1)] * v)
                        .sum::<f64>()
            })
            .collect();
        softmax(&logits)
    }

    pub fn log_likelihood(&self, x: &DMatrix<f64>, g: &[usize]) -> f64 {
        -objective(x, g, &self.theta, 0.0)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Negative log-likelihood plus ridge on slopes, in original coordinates.
pub fn objective(x: &DMatrix<f64>, g: &[usize], theta: &DMatrix<f64>, reg: f64) -> f64 {
    let design = with_intercept(x);
    let logits = &design * theta.transpose();
    let mut nll = 0.0;
    for (i, &gi) in g.iter().enumerate() {
        let row = logits.row(i);
        let mx = row.max();
        let lse = mx + row.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        nll += lse - row[gi];
    }
    let slopes = theta.columns(1, theta.ncols() - 1);
    nll + 0.5 * reg * slopes.norm_squared()
}

/// Gradient of [`objective`] with respect to `theta` (reference row zero).
pub fn gradient(x: &DMatrix<f64>, g: &[usize], theta: &DMatrix<f64>, reg: f64) -> DMatrix<f64> {
    let design = with_intercept(x);
    let m = theta.nrows();
    let mut resid = &design * theta.transpose();
    for (i, &gi) in g.iter().enumerate() {
        let p = softmax(&resid.row(i).iter().cloned().collect::<Vec<_>>());
        for (h, ph) in p.into_iter().enumerate() {
            resid[(i, h)] = ph - if h == gi { 1.0 } else { 0.0 };
        }
    }
    let mut grad = resid.transpose() * &design;
    for h in 0..m {
        for j in 1..theta.ncols() {
            grad[(h, j)] += reg * theta[(h, j)];
        }
    }
    grad.row_mut(m - 1).fill(0.0);
    grad
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    d.columns_mut(1, x.ncols()).copy_from(x);
    d
}

pub fn fit_mnl(x: &DMatrix<f64>, g: &[usize], n_categories: usize, reg: f64) -> Result<MnlModel> {
    fit_mnl_with(
        x,
        g,
        n_categories,
        &MnlOptions {
            reg,
            ..MnlOptions::default()
        },
    )
}

/// z-scored problem: rows `[1, (x - mean)/scale]`, parameters `w` for the
/// first `M-1` categories.
struct Problem<'a> {
    design: DMatrix<f64>,
    design_t: DMatrix<f64>,
    g: &'a [usize],
    mean: Vec<f64>,
    scale: Vec<f64>,
    k: usize,
    q: usize,
    reg: f64,
}

impl Problem<'_> {
    fn eval(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        let wm = DMatrix::from_column_slice(self.k, self.q, w.as_slice());
        // k × n, one contiguous column of logits per row of the data
        let mut logits = &wm * &self.design_t;
        let mut nll = 0.0;
        for (col, &gi) in logits.as_mut_slice().chunks_exact_mut(self.k).zip(self.g) {
            let picked = if gi < self.k { col[gi] } else { 0.0 };
            let mx = col.iter().fold(0.0f64, |m, &v| m.max(v));
            let mut s = (-mx).exp();
            for v in col.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            nll += mx + s.ln() - picked;
            let inv = 1.0 / s;
            col.iter_mut().for_each(|v| *v *= inv);
            if gi < self.k {
                col[gi] -= 1.0;
            }
        }
        let mut grad = logits * &self.design;
        for j in 1..self.q {
            let wgt = self.reg / (self.scale[j - 1] * self.scale[j - 1]);
            for h in 0..self.k {
                let v = wm[(h, j)];
                nll += 0.5 * wgt * v * v;
                grad[(h, j)] += wgt * v;
            }
        }
        (nll, DVector::from_column_slice(grad.as_slice()))
    }

    /// Category-wise diagonal blocks of the Hessian at `w`, factored; the
    /// cross-category terms are dropped.
    fn block_hessian(&self, w: &DVector<f64>) -> Option<Vec<Cholesky<f64, Dyn>>> {
        let wm = DMatrix::from_column_slice(self.k, self.q, w.as_slice());
        let mut probs = &wm * &self.design_t;
        for col in probs.as_mut_slice().chunks_exact_mut(self.k) {
            let mx = col.iter().fold(0.0f64, |m, &v| m.max(v));
            let mut s = (-mx).exp();
            for v in col.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            col.iter_mut().for_each(|v| *v /= s);
        }
        let n = self.design.nrows();
        let mut scaled = self.design.clone();
        (0..self.k)
            .map(|h| {
                for j in 0..self.q {
                    for i in 0..n {
                        let ph = probs[(h, i)];
                        scaled[(i, j)] = ph * (1.0 - ph) * self.design[(i, j)];
                    }
                }
                let mut block = &self.design_t * &scaled;
                for j in 1..self.q {
                    block[(j, j)] += self.reg / (self.scale[j - 1] * self.scale[j - 1]);
                }
                let jitter = 1e-12 * block.trace().max(f64::MIN_POSITIVE);
                for j in 0..self.q {
                    block[(j, j)] += jitter;
                }
                Cholesky::new(block)
            })
            .collect()
    }

    /// `H⁻¹ v` for the block-diagonal `H`.
    fn block_solve(&self, blocks: &[Cholesky<f64, Dyn>], v: &mut DVector<f64>) {
        for (h, chol) in blocks.iter().enumerate() {
            let mut part = DVector::from_iterator(self.q, (0..self.q).map(|j| v[h + self.k * j]));
            chol.solve_mut(&mut part);
            for j in 0..self.q {
                v[h + self.k * j] = part[j];
            }
        }
    }

    /// ∞-norm of the gradient with respect to the original coefficients.
    fn original_grad_norm(&self, grad: &DVector<f64>) -> f64 {
        let gm = DMatrix::from_column_slice(self.k, self.q, grad.as_slice());
        let mut norm: f64 = 0.0;
        for h in 0..self.k {
            let g0 = gm[(h, 0)];
            norm = norm.max(g0.abs());
            for j in 1..self.q {
                let v = g0 * self.mean[j - 1] + gm[(h, j)] * self.scale[j - 1];
                norm = norm.max(v.abs());
            }
        }
        norm
    }

    fn to_theta(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let wm = DMatrix::from_column_slice(self.k, self.q, w.as_slice());
        let mut theta = DMatrix::zeros(self.k + 1, self.q);
        for h in 0..self.k {
            let mut intercept = wm[(h, 0)];
            for j in 1..self.q {
                let slope = wm[(h, j)] / self.scale[j - 1];
                theta[(h, j)] = slope;
                intercept -= slope * self.mean[j - 1];
            }
            theta[(h, 0)] = intercept;
        }
        theta
    }
}

pub fn fit_mnl_with(
    x: &DMatrix<f64>,
    g: &[usize],
    n_categories: usize,
    opts: &MnlOptions,
) -> Result<MnlModel> {
    let (n, p) = x.shape();
    if n_categories < 2 {
        return Err(Error::Fit(
            "encoding undefined for single category".to_string(),
        ));
    }
    if g.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", g.len())));
    }
    if !(opts.reg >= 0.0) {
        return Err(Error::Config("ridge weight must be >= 0".to_string()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite covariate".to_string()));
    }
    let mut counts = vec![0usize; n_categories];
    for &gi in g {
        if gi >= n_categories {
            return Err(Error::Bounds {
                index: gi,
                len: n_categories,
            });
        }
        counts[gi] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Fit(format!("category {empty} has no rows")));
    }

    let mut mean = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col = x.column(j);
        let mu = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        mean[j] = mu;
        if var > 0.0 {
            scale[j] = var.sqrt();
        }
    }
    let mut design = DMatrix::from_element(n, p + 1, 1.0);
    for j in 0..p {
        for i in 0..n {
            design[(i, j + 1)] = (x[(i, j)] - mean[j]) / scale[j];
        }
    }
    let k = n_categories - 1;
    let q = p + 1;
    let prob = Problem {
        design_t: design.transpose(),
        design,
        g,
        mean,
        scale,
        k,
        q,
        reg: opts.reg,
    };

    // intercept-only maximum likelihood as the starting point
    let mut w = DVector::zeros(k * q);
    let n_ref = counts[k] as f64;
    for h in 0..k {
        w[h] = (counts[h] as f64 / n_ref).ln();
    }

    let (w, iterations, grad_norm, converged) = lbfgs(&prob, w, opts);
    Ok(MnlModel {
        theta: prob.to_theta(&w),
        reg: opts.reg,
        converged,
        grad_norm,
        iterations,
    })
}

/// Iterations between refreshes of the block-diagonal initial Hessian.
const PRECOND_REFRESH: usize = 20;

fn lbfgs(
    prob: &Problem<'_>,
    mut w: DVector<f64>,
    opts: &MnlOptions,
) -> (DVector<f64>, usize, f64, bool) {
    let (mut f, mut grad) = prob.eval(&w);
    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut gnorm = prob.original_grad_norm(&grad);
    let mut iter = 0;
    let mut precond = None;

    while gnorm > opts.tol && iter < opts.max_iter {
        iter += 1;
        // two-loop recursion
        let mut d = -grad.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for idx in (0..s_hist.len()).rev() {
            let a = rho_hist[idx] * s_hist[idx].dot(&d);
            d.axpy(-a, &y_hist[idx], 1.0);
            alphas[idx] = a;
        }
        if iter % PRECOND_REFRESH == 1 {
            precond = prob.block_hessian(&w);
        }
        match &precond {
            Some(blocks) => prob.block_solve(blocks, &mut d),
            None => {
                let gamma = match (s_hist.last(), y_hist.last()) {
                    (Some(s), Some(y)) => s.dot(y) / y.dot(y),
                    _ => 1.0 / grad.amax().max(1.0),
                };
                d *= gamma;
            }
        }
        for idx in 0..s_hist.len() {
            let b = rho_hist[idx] * y_hist[idx].dot(&d);
            d.axpy(alphas[idx] - b, &s_hist[idx], 1.0);
        }
        let mut slope = grad.dot(&d);
        if slope >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -grad.clone() / grad.amax().max(1.0);
            slope = grad.dot(&d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial = &w + &d * step;
            let (ft, gt) = prob.eval(&trial);
            // relative slack absorbs rounding once decreases fall below ulp(f)
            if ft.is_finite() && ft <= f + 1e-4 * step * slope + 1e-14 * f.abs() {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((w_new, f_new, g_new)) = accepted else {
            break;
        };
        let s = &w_new - &w;
        let y = &g_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }
        w = w_new;
        f = f_new;
        grad = g_new;
        gnorm = prob.original_grad_norm(&grad);
    }
    let _ = f;
    (w, iter, gnorm, gnorm <= opts.tol)
}
