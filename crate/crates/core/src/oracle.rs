//! Enumerable latent worlds for checking the sufficiency identities exactly.
//!
//! A world has a discrete latent `L` with `K` levels, categories `G` drawn
//! from `P(G | L)`, covariates drawn from a finite support through
//! `P(X | L)` and a conditional mean table `E[Y | X, L]`. Every quantity is
//! an explicit finite sum, so the regression function computed through the
//! different category representations can be compared to round-off.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numlin::{fit_mnl, pseudo_inverse, svd, SvdFactors, PINV_RTOL};
use crate::par::Execution;
use crate::rng::{self, Rng};

const MAX_WORLD_TRIES: usize = 100;
const MIN_SINGULAR: f64 = 1e-6;
const PMF_TOL: f64 = 1e-12;

pub const TOL_PSI: f64 = 1e-10;
pub const TOL_MEANS: f64 = 1e-8;
pub const TOL_LOWRANK: f64 = 1e-8;
pub const TOL_DECOMPOSITION: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LatentWorld {
    /// support_size × p.
    pub x_support: DMatrix<f64>,
    pub pi_l: Vec<f64>,
    /// K × M, rows are `P(G | L = l)`.
    pub pg_given_l: DMatrix<f64>,
    /// K × M, `Ψ[l, g] = P(L = l | G = g)`.
    pub psi: DMatrix<f64>,
    /// K × support_size.
    pub px_given_l: DMatrix<f64>,
    /// support_size × K.
    pub m_yl: DMatrix<f64>,
    pub pg: Vec<f64>,
    /// p × K latent means `E[X | L = l]`.
    pub a: DMatrix<f64>,
    /// p × M category means `E[X | G = g]`, enumerated from the joint.
    pub omega: DMatrix<f64>,
    a_pinv: Option<DMatrix<f64>>,
    omega_t_svd: SvdFactors,
    omega_rank: usize,
}

fn check_pmf_rows(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for r in 0..m.nrows() {
        let row = m.row(r);
        if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Fixture(format!(
                "{what} row {r} has a negative or non-finite entry"
            )));
        }
        if (row.sum() - 1.0).abs() > PMF_TOL {
            return Err(Error::Fixture(format!("{what} row {r} does not sum to 1")));
        }
    }
    Ok(())
}

impl LatentWorld {
    /// Builds a world from its generative pieces; all derived tables are
    /// computed here.
    pub fn from_parts(
        pi_l: Vec<f64>,
        pg_given_l: DMatrix<f64>,
        x_support: DMatrix<f64>,
        px_given_l: DMatrix<f64>,
        m_yl: DMatrix<f64>,
    ) -> Result<Self> {
        let k = pi_l.len();
        let (s, p) = x_support.shape();
        let m = pg_given_l.ncols();
        if k == 0 || m == 0 || s == 0 || p == 0 {
            return Err(Error::Fixture(
                "world dimensions must be positive".to_string(),
            ));
        }
        if pg_given_l.nrows() != k || px_given_l.shape() != (k, s) || m_yl.shape() != (s, k) {
            return Err(Error::Fixture(
                "inconsistent world table shapes".to_string(),
            ));
        }
        check_pmf_rows(&DMatrix::from_row_slice(1, k, &pi_l), "P(L)")?;
        check_pmf_rows(&pg_given_l, "P(G|L)")?;
        check_pmf_rows(&px_given_l, "P(X|L)")?;

        let pg: Vec<f64> = (0..m)
            .map(|g| (0..k).map(|l| pi_l[l] * pg_given_l[(l, g)]).sum())
            .collect();
        if let Some(g) = pg.iter().position(|&v| v <= 0.0) {
            return Err(Error::Fixture(format!("category {g} has probability zero")));
        }
        let psi = DMatrix::from_fn(k, m, |l, g| pi_l[l] * pg_given_l[(l, g)] / pg[g]);

        let a = DMatrix::from_fn(p, k, |t, l| {
            (0..s).map(|i| x_support[(i, t)] * px_given_l[(l, i)]).sum()
        });

        // E[X | G = g] straight from the joint P(L, G, X)
        let mut omega = DMatrix::zeros(p, m);
        for g in 0..m {
            for i in 0..s {
                let pxg: f64 = (0..k)
                    .map(|l| pi_l[l] * pg_given_l[(l, g)] * px_given_l[(l, i)])
                    .sum();
                for t in 0..p {
                    omega[(t, g)] += x_support[(i, t)] * pxg;
                }
            }
            omega.column_mut(g).unscale_mut(pg[g]);
        }

        let a_svd = svd(&a)?;
        let a_pinv = if p >= k && a_svd.d[k - 1] > MIN_SINGULAR {
            Some(pseudo_inverse(&a, PINV_RTOL)?)
        } else {
            None
        };
        let omega_t_svd = svd(&omega.transpose())?;
        let omega_rank = omega_t_svd.rank(1e-10);

        Ok(LatentWorld {
            x_support,
            pi_l,
            pg_given_l,
            psi,
            px_given_l,
            m_yl,
            pg,
            a,
            omega,
            a_pinv,
            omega_t_svd,
            omega_rank,
        })
    }

    pub fn num_latent(&self) -> usize {
        self.pi_l.len()
    }

    pub fn num_groups(&self) -> usize {
        self.pg.len()
    }

    pub fn support_size(&self) -> usize {
        self.x_support.nrows()
    }

    pub fn a_min_singular(&self) -> f64 {
        let k = self.num_latent();
        if self.a.nrows() < k {
            return 0.0;
        }
        svd(&self.a).map(|f| f.d[k - 1]).unwrap_or(0.0)
    }

    fn check_cell(&self, xi: usize, g: usize) -> Result<()> {
        if xi >= self.support_size() {
            return Err(Error::Bounds {
                index: xi,
                len: self.support_size(),
            });
        }
        if g >= self.num_groups() {
            return Err(Error::Bounds {
                index: g,
                len: self.num_groups(),
            });
        }
        Ok(())
    }

    /// Regression function written in terms of a latent-state vector:
    /// `Σ_l m(x,l) ψ_l P(x|l) / Σ_l ψ_l P(x|l)`.
    fn through_state(&self, xi: usize, state: &[f64]) -> Result<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for (l, &w) in state.iter().enumerate() {
            let weight = w * self.px_given_l[(l, xi)];
            num += self.m_yl[(xi, l)] * weight;
            den += weight;
        }
        if den == 0.0 {
            return Err(Error::Domain(format!(
                "zero-probability event at support point {xi}"
            )));
        }
        Ok(num / den)
    }

    fn pinv(&self) -> Result<&DMatrix<f64>> {
        self.a_pinv
            .as_ref()
            .ok_or_else(|| Error::Domain("latent-means matrix is not left-invertible".to_string()))
    }

    /// `A† ω(g)`.
    pub fn state_from_means(&self, g: usize) -> Result<DVector<f64>> {
        Ok(self.pinv()? * self.omega.column(g))
    }

    /// `V D u(g)ᵀ` with `u(g)` the first `rank(Ωᵀ)` entries of row `g` of U.
    pub fn means_from_lowrank(&self, g: usize) -> DVector<f64> {
        let f = &self.omega_t_svd;
        let k = self.omega_rank;
        let mut out = DVector::zeros(self.omega.nrows());
        for j in 0..k {
            out += f.v.column(j) * (f.d[j] * f.u[(g, j)]);
        }
        out
    }

    pub fn lowrank_dim(&self) -> usize {
        self.omega_rank
    }
}

/// Random world with strictly positive pmfs and a left-invertible `A`.
pub fn build_world(
    k: usize,
    m: usize,
    p: usize,
    support: usize,
    rng: &mut Rng,
) -> Result<LatentWorld> {
    if k == 0 || m == 0 {
        return Err(Error::Config(
            "latent levels and categories must be positive".to_string(),
        ));
    }
    if p < k {
        return Err(Error::Config(format!(
            "p ({p}) must be at least the latent levels ({k})"
        )));
    }
    if support < k {
        return Err(Error::Config(format!(
            "support size ({support}) must be at least the latent levels ({k})"
        )));
    }
    let pmf = |len: usize, rng: &mut Rng| -> Vec<f64> {
        let raw: Vec<f64> = (0..len)
            .map(|_| (1.5 * rng.sample::<f64, _>(StandardNormal)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    };
    for _ in 0..MAX_WORLD_TRIES {
        let pi_l = pmf(k, rng);
        let mut pg_given_l = DMatrix::zeros(k, m);
        for l in 0..k {
            for (g, v) in pmf(m, rng).into_iter().enumerate() {
                pg_given_l[(l, g)] = v;
            }
        }
        let x_support = DMatrix::from_fn(support, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut px_given_l = DMatrix::zeros(k, support);
        for l in 0..k {
            for (i, v) in pmf(support, rng).into_iter().enumerate() {
                px_given_l[(l, i)] = v;
            }
        }
        let m_yl = DMatrix::from_fn(support, k, |_, _| {
            2.0 * rng.sample::<f64, _>(StandardNormal)
        });
        let world = match LatentWorld::from_parts(pi_l, pg_given_l, x_support, px_given_l, m_yl) {
            Ok(w) => w,
            // rounding can push a normalized row a hair past the pmf tolerance
            Err(Error::Fixture(_)) => continue,
            Err(e) => return Err(e),
        };
        if world.a_pinv.is_some() {
            return Ok(world);
        }
    }
    Err(Error::Fixture(format!(
        "no world with a left-invertible latent-means matrix after {MAX_WORLD_TRIES} tries"
    )))
}

/// `E[Y | X = x, G = g]` by Bayes over the generative joint.
pub fn mu_direct(w: &LatentWorld, xi: usize, g: usize) -> Result<f64> {
    w.check_cell(xi, g)?;
    let (mut num, mut den) = (0.0, 0.0);
    for l in 0..w.num_latent() {
        let joint = w.pi_l[l] * w.pg_given_l[(l, g)] * w.px_given_l[(l, xi)];
        num += w.m_yl[(xi, l)] * joint;
        den += joint;
    }
    if den == 0.0 {
        return Err(Error::Domain(format!("P(X = x{xi}, G = {g}) is zero")));
    }
    Ok(num / den)
}

/// Regression function through the latent-state probabilities `ψ(g)`.
pub fn mu_via_psi(w: &LatentWorld, xi: usize, g: usize) -> Result<f64> {
    w.check_cell(xi, g)?;
    let state: Vec<f64> = w.psi.column(g).iter().cloned().collect();
    w.through_state(xi, &state)
}

/// Regression function through the category means, `ψ(g) = A† ω(g)`.
pub fn mu_via_means(w: &LatentWorld, xi: usize, g: usize) -> Result<f64> {
    w.check_cell(xi, g)?;
    let state = w.state_from_means(g)?;
    w.through_state(xi, state.as_slice())
}

/// Regression function through the low-rank codes `u(g)`.
pub fn mu_via_lowrank(w: &LatentWorld, xi: usize, g: usize) -> Result<f64> {
    w.check_cell(xi, g)?;
    let state = w.pinv()? * w.means_from_lowrank(g);
    w.through_state(xi, state.as_slice())
}

/// Largest errors of every identity over the full support × category grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WorldCheck {
    pub decomposition: f64,
    pub psi: f64,
    pub means: f64,
    pub lowrank: f64,
}

impl WorldCheck {
    /// Worst of both checks.
    pub fn merge(self, other: WorldCheck) -> WorldCheck {
        WorldCheck {
            decomposition: self.decomposition.max(other.decomposition),
            psi: self.psi.max(other.psi),
            means: self.means.max(other.means),
            lowrank: self.lowrank.max(other.lowrank),
        }
    }
}

pub fn check_world(w: &LatentWorld, exec: Execution) -> Result<WorldCheck> {
    let decomposition = (&w.a * &w.psi - &w.omega).amax();
    let s = w.support_size();
    let cells = exec.map_range(s * w.num_groups(), |c| -> Result<WorldCheck> {
        let (xi, g) = (c % s, c / s);
        let direct = mu_direct(w, xi, g)?;
        Ok(WorldCheck {
            decomposition: 0.0,
            psi: (mu_via_psi(w, xi, g)? - direct).abs(),
            means: (mu_via_means(w, xi, g)? - direct).abs(),
            lowrank: (mu_via_lowrank(w, xi, g)? - direct).abs(),
        })
    });
    let mut out = WorldCheck {
        decomposition,
        ..WorldCheck::default()
    };
    for c in cells {
        out = out.merge(c?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRow {
    pub identity: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub worlds: usize,
    pub rows: Vec<IdentityRow>,
}

impl OracleReport {
    pub fn from_check(worlds: usize, c: &WorldCheck) -> Self {
        let row = |name: &str, err: f64, tol: f64| IdentityRow {
            identity: name.to_string(),
            max_abs_error: err,
            tolerance: tol,
            passed: err <= tol,
        };
        OracleReport {
            worlds,
            rows: vec![
                row("omega = A psi", c.decomposition, TOL_DECOMPOSITION),
                row("mu via psi", c.psi, TOL_PSI),
                row("mu via means", c.means, TOL_MEANS),
                row("mu via lowrank", c.lowrank, TOL_LOWRANK),
            ],
        }
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<18} {:>14} {:>10}  result\n",
            "identity", "max_abs_error", "tolerance"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<18} {:>14.3e} {:>10.0e}  {}\n",
                r.identity,
                r.max_abs_error,
                r.tolerance,
                if r.passed { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepConfig {
    pub worlds: usize,
    pub num_latent: usize,
    pub num_groups: usize,
    pub p: usize,
    pub support: usize,
    pub seed: u64,
}

/// Builds `worlds` worlds (world `i` from stream `i` of the seed), checks
/// each and reports the worst errors.
pub fn oracle_sweep(cfg: &SweepConfig, exec: Execution) -> Result<OracleReport> {
    if cfg.worlds == 0 {
        return Err(Error::Config("at least one world is needed".to_string()));
    }
    let checks = exec.map_range(cfg.worlds, |i| -> Result<WorldCheck> {
        let mut rng = rng::stream(cfg.seed, i as u64);
        let w = build_world(cfg.num_latent, cfg.num_groups, cfg.p, cfg.support, &mut rng)?;
        check_world(&w, Execution::Sequential)
    });
    let mut worst = WorldCheck::default();
    for c in checks {
        worst = worst.merge(c?);
    }
    Ok(OracleReport::from_check(cfg.worlds, &worst))
}

/// `X ~ N(0, I_p)`, `G | X` multinomial logit with coefficient rows
/// `theta[g] = (intercept, slopes)`.
pub fn sample_mnl(theta: &DMatrix<f64>, n: usize, rng: &mut Rng) -> (DMatrix<f64>, Vec<usize>) {
    let (m, cols) = theta.shape();
    let p = cols - 1;
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut probs = vec![0.0; m];
    let g = (0..n)
        .map(|i| {
            logit_probabilities(theta, x.row(i).iter().cloned(), &mut probs);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (c, pr) in probs.iter().enumerate() {
                acc += pr;
                if u < acc {
                    return c;
                }
            }
            m - 1
        })
        .collect();
    (x, g)
}

fn logit_probabilities(
    theta: &DMatrix<f64>,
    x: impl Iterator<Item = f64> + Clone,
    out: &mut [f64],
) {
    for (c, o) in out.iter_mut().enumerate() {
        *o = theta[(c, 0)]
            + x.clone()
                .enumerate()
                .map(|(j, v)| theta[(c, j + 1)] * v)
                .sum::<f64>();
    }
    let top = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - top).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Sample version of `f(θ_g) = E[X Λ_θ(g|X)] / E[Λ_θ(g|X)]`, one row per
/// category.
pub fn moment_map(theta: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, p) = (theta.nrows(), x.ncols());
    let mut num = DMatrix::zeros(m, p);
    let mut den = vec![0.0; m];
    let mut probs = vec![0.0; m];
    for i in 0..x.nrows() {
        logit_probabilities(theta, x.row(i).iter().cloned(), &mut probs);
        for c in 0..m {
            den[c] += probs[c];
            for j in 0..p {
                num[(c, j)] += x[(i, j)] * probs[c];
            }
        }
    }
    for c in 0..m {
        num.row_mut(c).unscale_mut(den[c]);
    }
    num
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub n: usize,
    /// `max_g ‖f(θ̂_g) − ω̂(g)‖_∞` with `f` averaged over a fresh covariate
    /// sample of the same size.
    pub discrepancy: f64,
    /// Same with `f` averaged over the fitting sample; zero up to the
    /// optimizer tolerance, since these are the likelihood equations.
    pub in_sample_discrepancy: f64,
    pub converged: bool,
    pub resamples: usize,
}

/// Fits the multinomial logit on `n` draws from the logit world `theta`
/// and compares the fitted moment map to the empirical category means.
pub fn mnl_moment_check(theta: &DMatrix<f64>, n: usize, seed: u64) -> Result<MomentReport> {
    let m = theta.nrows();
    if m < 2 || theta.ncols() < 2 {
        return Err(Error::Config(
            "logit world needs >= 2 categories and >= 1 covariate".to_string(),
        ));
    }
    for attempt in 0..MAX_WORLD_TRIES {
        let (x, g) = sample_mnl(theta, n, &mut rng::stream(seed, 2 * attempt as u64));
        let mut counts = vec![0usize; m];
        g.iter().for_each(|&c| counts[c] += 1);
        if counts.contains(&0) {
            continue;
        }
        let model = fit_mnl(&x, &g, m, 1e-8)?;
        let p = x.ncols();
        let mut omega_hat = DMatrix::zeros(m, p);
        for (i, &c) in g.iter().enumerate() {
            for j in 0..p {
                omega_hat[(c, j)] += x[(i, j)];
            }
        }
        for c in 0..m {
            omega_hat.row_mut(c).unscale_mut(counts[c] as f64);
        }
        let (x_eval, _) = sample_mnl(theta, n, &mut rng::stream(seed, 2 * attempt as u64 + 1));
        let discrepancy = (moment_map(&model.theta, &x_eval) - &omega_hat).amax();
        let in_sample_discrepancy = (moment_map(&model.theta, &x) - &omega_hat).amax();
        return Ok(MomentReport {
            n,
            discrepancy,
            in_sample_discrepancy,
            converged: model.converged,
            resamples: attempt,
        });
    }
    Err(Error::Fixture(
        "logit world keeps leaving a category empty".to_string(),
    ))
}
