//! Latent-class simulator.
//!
//! A hidden label `L` drives both the observed category `G` (through a
//! block assignment rule) and the covariates `X ~ N(μ_L, Σ)`; the response
//! depends on `L` and `X` only. Latent labels are returned for diagnostics
//! and are never part of the dataset.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const STREAM_PARAMS: u64 = 0;
const STREAM_LATENT: u64 = 1;
const STREAM_GROUPS: u64 = 2;
const STREAM_COVARIATES: u64 = 3;
const STREAM_NOISE: u64 = 4;
const MAX_REGENERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    /// Latent intercepts, one shared slope.
    GlobalLinear,
    /// Latent intercepts and latent slopes.
    LatentLinear,
    /// Latent slopes that switch at each feature's sample median.
    LatentPiecewise,
}

impl Setup {
    pub fn name(self) -> &'static str {
        match self {
            Setup::GlobalLinear => "global_linear",
            Setup::LatentLinear => "latent_linear",
            Setup::LatentPiecewise => "latent_piecewise",
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Setup::GlobalLinear,
            Setup::LatentLinear,
            Setup::LatentPiecewise,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown simulation setup '{s}'")))
    }
}

fn default_p_assign() -> f64 {
    0.9
}

fn default_noise_sd() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub num_latent: usize,
    pub num_groups: usize,
    pub p: usize,
    /// Probability that a row's category falls in its latent block.
    #[serde(default = "default_p_assign")]
    pub p_assign: f64,
    pub setup: Setup,
    #[serde(default)]
    pub seed: u64,
    /// Use one support set for the nonzero mean entries of every latent
    /// level instead of one per level.
    #[serde(default)]
    pub shared_support: bool,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
}

impl SimConfig {
    pub fn new(setup: Setup, n: usize, num_latent: usize, num_groups: usize, p: usize) -> Self {
        SimConfig {
            n,
            num_latent,
            num_groups,
            p,
            p_assign: default_p_assign(),
            setup,
            seed: 0,
            shared_support: false,
            noise_sd: default_noise_sd(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return fail("n must be positive".to_string());
        }
        if self.num_latent == 0 {
            return fail("number of latent levels must be positive".to_string());
        }
        if self.num_groups < self.num_latent || !self.num_groups.is_multiple_of(self.num_latent) {
            return fail(format!(
                "number of groups ({}) must be a positive multiple of the latent levels ({})",
                self.num_groups, self.num_latent
            ));
        }
        if self.p < 3 {
            return fail(format!("p must be at least 3, got {}", self.p));
        }
        if !(self.p_assign > 0.5 && self.p_assign <= 1.0) {
            return fail(format!(
                "p_assign must lie in (0.5, 1], got {}",
                self.p_assign
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return fail(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        Ok(())
    }

    fn block_size(&self) -> usize {
        self.num_groups / self.num_latent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Slopes {
    Global {
        beta: Vec<f64>,
    },
    /// One row per latent level.
    Latent {
        #[serde(with = "crate::serde_mat")]
        beta: DMatrix<f64>,
    },
    /// Slopes above and below the per-feature median, one row per level.
    Piecewise {
        #[serde(with = "crate::serde_mat")]
        plus: DMatrix<f64>,
        #[serde(with = "crate::serde_mat")]
        minus: DMatrix<f64>,
        /// Filled in from the realized sample.
        medians: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// num_latent × p.
    #[serde(with = "crate::serde_mat")]
    pub mu: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub sigma: DMatrix<f64>,
    pub alpha: Vec<f64>,
    pub slopes: Slopes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub dataset: Dataset,
    pub latent: Vec<usize>,
    pub params: SimParams,
    /// Number of discarded draws that left some category empty.
    pub regenerations: usize,
}

/// `(Σ)_{kj} = 2^{-|k-j|}`.
pub fn ar_covariance(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |k, j| 0.5f64.powi(k.abs_diff(j) as i32))
}

fn laplace(rng: &mut Rng) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Entries uniform on {-1, 0, 1}, redrawn while all zero, then scaled to
/// unit length.
fn unit_slope(p: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..p).map(|_| rng.random_range(-1i32..=1) as f64).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return raw.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn slope_rows(rows: usize, p: usize, rng: &mut Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, p);
    for r in 0..rows {
        for (j, v) in unit_slope(p, rng).into_iter().enumerate() {
            m[(r, j)] = v;
        }
    }
    m
}

pub fn draw_params(cfg: &SimConfig, rng: &mut Rng) -> Result<SimParams> {
    cfg.validate()?;
    let (l, p) = (cfg.num_latent, cfg.p);
    let mut mu = DMatrix::zeros(l, p);
    let shared = sample(rng, p, 3).into_vec();
    for row in 0..l {
        let support = if cfg.shared_support {
            shared.clone()
        } else {
            sample(rng, p, 3).into_vec()
        };
        for j in support {
            mu[(row, j)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
    let alpha = (0..l).map(|_| laplace(rng)).collect();
    let slopes = match cfg.setup {
        Setup::GlobalLinear => Slopes::Global {
            beta: unit_slope(p, rng),
        },
        Setup::LatentLinear => Slopes::Latent {
            beta: slope_rows(l, p, rng),
        },
        Setup::LatentPiecewise => Slopes::Piecewise {
            plus: slope_rows(l, p, rng),
            minus: slope_rows(l, p, rng),
            medians: Vec::new(),
        },
    };
    Ok(SimParams {
        mu,
        sigma: ar_covariance(p),
        alpha,
        slopes,
    })
}

/// I.i.d. uniform latent labels.
pub fn draw_latent(cfg: &SimConfig, rng: &mut Rng) -> Vec<usize> {
    (0..cfg.n)
        .map(|_| rng.random_range(0..cfg.num_latent))
        .collect()
}

/// `P(G = g | L = l)` for every category.
pub fn group_probabilities(cfg: &SimConfig, l: usize) -> Vec<f64> {
    let b = cfg.block_size();
    let outside = cfg.num_groups - b;
    (0..cfg.num_groups)
        .map(|g| {
            if g / b == l {
                if outside == 0 {
                    1.0 / b as f64
                } else {
                    cfg.p_assign / b as f64
                }
            } else {
                (1.0 - cfg.p_assign) / outside as f64
            }
        })
        .collect()
}

/// Category draws; reads nothing but the latent labels.
pub fn draw_groups(latent: &[usize], cfg: &SimConfig, rng: &mut Rng) -> Vec<usize> {
    let b = cfg.block_size();
    let outside = cfg.num_groups - b;
    latent
        .iter()
        .map(|&l| {
            let in_block = outside == 0 || rng.random::<f64>() < cfg.p_assign;
            if in_block {
                l * b + rng.random_range(0..b)
            } else {
                let r = rng.random_range(0..outside);
                if r < l * b {
                    r
                } else {
                    r + b
                }
            }
        })
        .collect()
}

/// Rows `x_i ~ N(μ_{L_i}, Σ)` through the Cholesky factor of Σ.
pub fn draw_covariates(
    latent: &[usize],
    params: &SimParams,
    rng: &mut Rng,
) -> Result<DMatrix<f64>> {
    let p = params.sigma.nrows();
    let chol = params
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariance is not positive definite".to_string()))?;
    let lower = chol.l();
    let mut x = DMatrix::zeros(latent.len(), p);
    let mut z = vec![0.0; p];
    for (i, &l) in latent.iter().enumerate() {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for r in 0..p {
            let mut acc = params.mu[(l, r)];
            for (c, zc) in z.iter().enumerate().take(r + 1) {
                acc += lower[(r, c)] * zc;
            }
            x[(i, r)] = acc;
        }
    }
    Ok(x)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Column medians of the sample.
pub fn sample_medians(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols())
        .map(|j| median(&mut x.column(j).iter().cloned().collect::<Vec<_>>()))
        .collect()
}

/// Noise-free part of the response for one row.
fn signal(slopes: &Slopes, alpha: f64, l: usize, x: &[f64]) -> Result<f64> {
    let dot = match slopes {
        Slopes::Global { beta } => x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>(),
        Slopes::Latent { beta } => x.iter().enumerate().map(|(j, v)| v * beta[(l, j)]).sum(),
        Slopes::Piecewise {
            plus,
            minus,
            medians,
        } => {
            if medians.len() != x.len() {
                return Err(Error::Config(
                    "piecewise slopes need feature medians".to_string(),
                ));
            }
            x.iter()
                .enumerate()
                .map(|(j, &v)| {
                    if v > medians[j] {
                        v * plus[(l, j)]
                    } else {
                        v * minus[(l, j)]
                    }
                })
                .sum()
        }
    };
    Ok(alpha + dot)
}

/// `y = α_L + slope term + noise_sd · ε`.
pub fn gen_outcome(
    setup: Setup,
    x: &DMatrix<f64>,
    latent: &[usize],
    params: &SimParams,
    noise_sd: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let matches = matches!(
        (setup, &params.slopes),
        (Setup::GlobalLinear, Slopes::Global { .. })
            | (Setup::LatentLinear, Slopes::Latent { .. })
            | (Setup::LatentPiecewise, Slopes::Piecewise { .. })
    );
    if !matches {
        return Err(Error::Config(format!(
            "parameters do not belong to setup {setup}"
        )));
    }
    let mut row = vec![0.0; x.ncols()];
    latent
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = x[(i, j)];
            }
            let eps: f64 = rng.sample(StandardNormal);
            Ok(signal(&params.slopes, params.alpha[l], l, &row)? + noise_sd * eps)
        })
        .collect()
}

/// Full simulation. Each stage draws from its own substream of `cfg.seed`;
/// draws that leave a category empty are discarded and counted.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let mut params = draw_params(cfg, &mut rng::stream(cfg.seed, STREAM_PARAMS))?;
    for attempt in 0..MAX_REGENERATIONS {
        let sub = |stage: u64| rng::stream(cfg.seed, stage + 8 * attempt as u64);
        let latent = draw_latent(cfg, &mut sub(STREAM_LATENT));
        let g = draw_groups(&latent, cfg, &mut sub(STREAM_GROUPS));
        let mut seen = vec![false; cfg.num_groups];
        g.iter().for_each(|&gi| seen[gi] = true);
        if seen.iter().any(|s| !s) {
            log::debug!("simulation draw {attempt} left a category empty, regenerating");
            continue;
        }
        let x = draw_covariates(&latent, &params, &mut sub(STREAM_COVARIATES))?;
        if let Slopes::Piecewise { medians, .. } = &mut params.slopes {
            *medians = sample_medians(&x);
        }
        let y = gen_outcome(
            cfg.setup,
            &x,
            &latent,
            &params,
            cfg.noise_sd,
            &mut sub(STREAM_NOISE),
        )?;
        let width = (cfg.num_groups - 1).to_string().len();
        let levels = (0..cfg.num_groups)
            .map(|k| format!("g{k:0width$}"))
            .collect();
        let dataset = Dataset::new(x, g, Some(y), levels)?;
        return Ok(SimOutput {
            dataset,
            latent,
            params,
            regenerations: attempt,
        });
    }
    Err(Error::Config(format!(
        "{MAX_REGENERATIONS} draws in a row left a category empty; increase n"
    )))
}
