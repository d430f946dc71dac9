//! Fit/transform encoders replacing the categorical column by real columns.
//!
//! Every encoder learns one row of codes per training level; `transform`
//! looks rows up by level name, so the encoding of a row depends on that row
//! only through its category. Levels of the catalog that have no training
//! rows are treated like levels never seen at all.

pub mod contrast;
pub mod integer;
mod model_file;
pub mod select;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numlin::{fit_mnl, sparse_pca, svd, MnlModel, SpcaFactors, SvdFactors};

pub use contrast::{contrast_encode, ContrastScheme};
pub use model_file::MODEL_FORMAT_VERSION;
pub use select::{cv_mse, select_k_by_cv, KSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Onehot,
    Deviation,
    Difference,
    Helmert,
    Repeated,
    Permutation,
    Multiperm,
    Fisher,
    Means,
    Lowrank,
    Sparselowrank,
    Mnl,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Onehot,
        Method::Deviation,
        Method::Difference,
        Method::Helmert,
        Method::Repeated,
        Method::Permutation,
        Method::Multiperm,
        Method::Fisher,
        Method::Means,
        Method::Lowrank,
        Method::Sparselowrank,
        Method::Mnl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Onehot => "onehot",
            Method::Deviation => "deviation",
            Method::Difference => "difference",
            Method::Helmert => "helmert",
            Method::Repeated => "repeated",
            Method::Permutation => "permutation",
            Method::Multiperm => "multiperm",
            Method::Fisher => "fisher",
            Method::Means => "means",
            Method::Lowrank => "lowrank",
            Method::Sparselowrank => "sparselowrank",
            Method::Mnl => "mnl",
        }
    }

    pub fn contrast_scheme(self) -> Option<ContrastScheme> {
        match self {
            Method::Onehot => Some(ContrastScheme::Onehot),
            Method::Deviation => Some(ContrastScheme::Deviation),
            Method::Difference => Some(ContrastScheme::Difference),
            Method::Helmert => Some(ContrastScheme::Helmert),
            Method::Repeated => Some(ContrastScheme::Repeated),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown encoding method '{s}'")))
    }
}

/// What `transform` does with a level that had no training rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnseenPolicy {
    Error,
    /// Overall covariate mean for `means`, `levels + 1` for integer codes,
    /// the zero vector otherwise.
    #[default]
    GlobalMeanFallback,
}

impl FromStr for UnseenPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(UnseenPolicy::Error),
            "fallback" | "global-mean-fallback" => Ok(UnseenPolicy::GlobalMeanFallback),
            _ => Err(Error::Config(format!("unknown unseen-level policy '{s}'"))),
        }
    }
}

/// Per-level covariate means: `omega` is p×M, column `g` is the mean of the
/// rows with `G = g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    #[serde(with = "crate::serde_mat")]
    pub omega: DMatrix<f64>,
    pub counts: Vec<usize>,
}

pub fn group_averages(x: &DMatrix<f64>, g: &[usize], levels: usize) -> Result<GroupMeans> {
    let (n, p) = x.shape();
    if g.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", g.len())));
    }
    let mut sums = DMatrix::<f64>::zeros(p, levels);
    let mut counts = vec![0usize; levels];
    for (i, &gi) in g.iter().enumerate() {
        if gi >= levels {
            return Err(Error::Bounds {
                index: gi,
                len: levels,
            });
        }
        counts[gi] += 1;
        for j in 0..p {
            sums[(j, gi)] += x[(i, j)];
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Fit(format!("category {empty} has no rows")));
    }
    for (gi, &c) in counts.iter().enumerate() {
        sums.column_mut(gi).unscale_mut(c as f64);
    }
    Ok(GroupMeans {
        omega: sums,
        counts,
    })
}

/// Learned parameters, one variant per family of methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderParams {
    Contrast {
        scheme: ContrastScheme,
        #[serde(with = "crate::serde_mat")]
        table: DMatrix<f64>,
    },
    /// levels × copies integer codes.
    Integer {
        #[serde(with = "crate::serde_mat")]
        codes: DMatrix<f64>,
    },
    Means(GroupMeans),
    LowRank {
        svd: SvdFactors,
        k: usize,
    },
    SparseLowRank {
        spca: SpcaFactors,
        /// levels × k projections `Ωᵀ B`.
        #[serde(with = "crate::serde_mat")]
        z: DMatrix<f64>,
    },
    Mnl(MnlModel),
}

impl EncoderParams {
    /// levels × output_dim lookup table.
    fn table(&self) -> DMatrix<f64> {
        match self {
            EncoderParams::Contrast { table, .. } => table.clone(),
            EncoderParams::Integer { codes } => codes.clone(),
            EncoderParams::Means(gm) => gm.omega.transpose(),
            EncoderParams::LowRank { svd, k } => svd.u.columns(0, *k).into_owned(),
            EncoderParams::SparseLowRank { z, .. } => z.clone(),
            EncoderParams::Mnl(model) => model.theta.clone(),
        }
    }
}

/// A fitted encoder. Immutable; `transform` may be called concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedEncoder {
    method: Method,
    params: EncoderParams,
    level_names: Vec<String>,
    column_labels: Vec<String>,
    fallback: Vec<f64>,
    unseen_policy: UnseenPolicy,
    table: DMatrix<f64>,
    index: HashMap<String, usize>,
}

/// Encoded rows with their column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMatrix {
    pub s: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl FittedEncoder {
    fn build(
        method: Method,
        params: EncoderParams,
        level_names: Vec<String>,
        column_labels: Vec<String>,
        fallback: Vec<f64>,
    ) -> Result<Self> {
        let table = params.table();
        if table.nrows() != level_names.len()
            || table.ncols() != column_labels.len()
            || fallback.len() != column_labels.len()
        {
            return Err(Error::Model(format!(
                "inconsistent encoder: table {}x{}, {} levels, {} labels, fallback {}",
                table.nrows(),
                table.ncols(),
                level_names.len(),
                column_labels.len(),
                fallback.len()
            )));
        }
        let index = level_names
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok(FittedEncoder {
            method,
            params,
            level_names,
            column_labels,
            fallback,
            unseen_policy: UnseenPolicy::default(),
            table,
            index,
        })
    }

    pub fn with_unseen_policy(mut self, policy: UnseenPolicy) -> Self {
        self.unseen_policy = policy;
        self
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn output_dim(&self) -> usize {
        self.column_labels.len()
    }

    pub fn unseen_policy(&self) -> UnseenPolicy {
        self.unseen_policy
    }

    /// Levels the encoder was fitted on, in table-row order.
    pub fn level_names(&self) -> &[String] {
        &self.level_names
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    /// levels × output_dim code table.
    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    pub fn fallback(&self) -> &[f64] {
        &self.fallback
    }

    /// Table plus the fallback as a final row.
    pub fn table_with_fallback(&self) -> DMatrix<f64> {
        let l = self.table.nrows();
        let mut t = self.table.clone().insert_row(l, 0.0);
        for (j, v) in self.fallback.iter().enumerate() {
            t[(l, j)] = *v;
        }
        t
    }

    /// Row index into [`Self::table_with_fallback`] for every row of `d`.
    pub fn codes(&self, d: &Dataset) -> Result<Vec<usize>> {
        let fallback_row = self.table.nrows();
        let per_level: Vec<Option<usize>> = d
            .level_names()
            .iter()
            .map(|name| self.index.get(name).copied())
            .collect();
        d.g()
            .iter()
            .map(|&gi| match per_level[gi] {
                Some(r) => Ok(r),
                None => match self.unseen_policy {
                    UnseenPolicy::Error => Err(Error::UnseenLevel(d.level_names()[gi].clone())),
                    UnseenPolicy::GlobalMeanFallback => Ok(fallback_row),
                },
            })
            .collect()
    }

    pub fn transform(&self, d: &Dataset) -> Result<EncodingMatrix> {
        let codes = self.codes(d)?;
        let dim = self.output_dim();
        let mut s = DMatrix::zeros(codes.len(), dim);
        for (i, &c) in codes.iter().enumerate() {
            if c < self.table.nrows() {
                s.row_mut(i).copy_from(&self.table.row(c));
            } else {
                for j in 0..dim {
                    s[(i, j)] = self.fallback[j];
                }
            }
        }
        Ok(EncodingMatrix {
            s,
            labels: self.column_labels.clone(),
        })
    }
}

/// Training rows re-indexed onto the levels that actually occur.
struct Compact {
    names: Vec<String>,
    g: Vec<usize>,
}

fn compact(d: &Dataset) -> Compact {
    let counts = d.level_counts();
    let mut map = vec![usize::MAX; d.m()];
    let mut names = Vec::new();
    for (l, &c) in counts.iter().enumerate() {
        if c > 0 {
            map[l] = names.len();
            names.push(d.level_names()[l].clone());
        }
    }
    Compact {
        names,
        g: d.g().iter().map(|&gi| map[gi]).collect(),
    }
}

fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols()).map(|j| x.column(j).sum() / n).collect()
}

pub fn fit_contrast(scheme: ContrastScheme, d: &Dataset) -> Result<FittedEncoder> {
    let c = compact(d);
    let table = contrast_encode(scheme, c.names.len())?;
    let labels = c.names[1..]
        .iter()
        .map(|l| format!("{}_{l}", d.category_name()))
        .collect::<Vec<_>>();
    let fallback = vec![0.0; labels.len()];
    let method = match scheme {
        ContrastScheme::Onehot => Method::Onehot,
        ContrastScheme::Deviation => Method::Deviation,
        ContrastScheme::Difference => Method::Difference,
        ContrastScheme::Helmert => Method::Helmert,
        ContrastScheme::Repeated => Method::Repeated,
    };
    FittedEncoder::build(
        method,
        EncoderParams::Contrast { scheme, table },
        c.names,
        labels,
        fallback,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegerScheme {
    Permutation,
    Multiperm,
    Fisher,
}

/// Integer codes. `copies` is forced to 1 for permutation and Fisher.
pub fn integer_encode(
    scheme: IntegerScheme,
    d: &Dataset,
    seed: u64,
    copies: usize,
) -> Result<FittedEncoder> {
    let c = compact(d);
    let levels = c.names.len();
    let cat = d.category_name();
    let (method, codes, labels) = match scheme {
        IntegerScheme::Permutation => (
            Method::Permutation,
            integer::random_permutations(levels, 1, seed),
            vec![format!("{cat}_perm")],
        ),
        IntegerScheme::Multiperm => {
            if copies == 0 {
                return Err(Error::Config(
                    "multiperm needs at least one copy".to_string(),
                ));
            }
            (
                Method::Multiperm,
                integer::random_permutations(levels, copies, seed),
                (1..=copies).map(|j| format!("{cat}_perm{j}")).collect(),
            )
        }
        IntegerScheme::Fisher => {
            let y = d
                .y()
                .ok_or_else(|| Error::Config("fisher encoding requires a response".to_string()))?;
            let ranks = integer::fisher_ranks(&c.g, y, levels)?;
            (
                Method::Fisher,
                DMatrix::from_iterator(levels, 1, ranks.into_iter().map(|r| r as f64)),
                vec![format!("{cat}_fisher")],
            )
        }
    };
    let fallback = vec![(levels + 1) as f64; labels.len()];
    FittedEncoder::build(
        method,
        EncoderParams::Integer { codes },
        c.names,
        labels,
        fallback,
    )
}

pub fn fit_means(d: &Dataset) -> Result<FittedEncoder> {
    if d.p() == 0 {
        return Err(Error::Dimension(
            "means encoding needs at least one covariate".to_string(),
        ));
    }
    let c = compact(d);
    let gm = group_averages(d.x(), &c.g, c.names.len())?;
    let labels = d
        .covariate_names()
        .iter()
        .map(|x| format!("{}_mean_{x}", d.category_name()))
        .collect();
    FittedEncoder::build(
        Method::Means,
        EncoderParams::Means(gm),
        c.names,
        labels,
        column_means(d.x()),
    )
}

pub fn fit_lowrank(d: &Dataset, k: usize) -> Result<FittedEncoder> {
    let c = compact(d);
    let levels = c.names.len();
    let max_k = levels.min(d.p());
    if k == 0 || k > max_k {
        return Err(Error::Dimension(format!(
            "low-rank k={k} outside 1..={max_k}"
        )));
    }
    let gm = group_averages(d.x(), &c.g, levels)?;
    let factors = svd(&gm.omega.transpose())?;
    let labels = (1..=k)
        .map(|j| format!("{}_u{j}", d.category_name()))
        .collect();
    FittedEncoder::build(
        Method::Lowrank,
        EncoderParams::LowRank { svd: factors, k },
        c.names,
        labels,
        vec![0.0; k],
    )
}

pub fn fit_sparse_lowrank(
    d: &Dataset,
    k: usize,
    lambda: f64,
    lambda1: f64,
) -> Result<FittedEncoder> {
    let c = compact(d);
    let levels = c.names.len();
    let max_k = levels.min(d.p());
    if k == 0 || k > max_k {
        return Err(Error::Dimension(format!(
            "sparse low-rank k={k} outside 1..={max_k}"
        )));
    }
    let gm = group_averages(d.x(), &c.g, levels)?;
    let omega_t = gm.omega.transpose();
    let spca = sparse_pca(&omega_t, k, lambda, &vec![lambda1; k])?;
    if !spca.converged {
        log::warn!(
            "sparse PCA stopped after {} iterations without converging",
            spca.iterations
        );
    }
    let z = &omega_t * &spca.b;
    let labels = (1..=k)
        .map(|j| format!("{}_z{j}", d.category_name()))
        .collect();
    FittedEncoder::build(
        Method::Sparselowrank,
        EncoderParams::SparseLowRank { spca, z },
        c.names,
        labels,
        vec![0.0; k],
    )
}

pub fn fit_mnl_encoder(d: &Dataset, reg: f64) -> Result<FittedEncoder> {
    let c = compact(d);
    let levels = c.names.len();
    if levels < 2 {
        return Err(Error::Fit(
            "encoding undefined for single category".to_string(),
        ));
    }
    let model = fit_mnl(d.x(), &c.g, levels, reg)?;
    if !model.converged {
        log::warn!(
            "multinomial logit stopped after {} iterations, gradient norm {:.3e}",
            model.iterations,
            model.grad_norm
        );
    }
    let cat = d.category_name();
    let mut labels = vec![format!("{cat}_theta_intercept")];
    labels.extend(
        d.covariate_names()
            .iter()
            .map(|x| format!("{cat}_theta_{x}")),
    );
    let dim = labels.len();
    FittedEncoder::build(
        Method::Mnl,
        EncoderParams::Mnl(model),
        c.names,
        labels,
        vec![0.0; dim],
    )
}

fn default_reg() -> f64 {
    1e-8
}

fn default_lambda1() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    1e-6
}

/// Everything needed to fit one encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub method: Method,
    /// Rank for the low-rank methods; `None` means `min(levels, p)`.
    #[serde(default)]
    pub k: Option<usize>,
    /// Ridge weight of sparse PCA.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// L1 weight of sparse PCA, shared by all components.
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    /// Ridge weight of the multinomial logit.
    #[serde(default = "default_reg")]
    pub reg: f64,
    /// Seed of the random permutation codes.
    #[serde(default)]
    pub seed: u64,
    /// Number of permutations for multiperm (default 4).
    #[serde(default)]
    pub copies: Option<usize>,
    #[serde(default)]
    pub unseen: UnseenPolicy,
}

impl EncoderSpec {
    pub fn new(method: Method) -> Self {
        EncoderSpec {
            method,
            k: None,
            lambda: default_lambda(),
            lambda1: default_lambda1(),
            reg: default_reg(),
            seed: 0,
            copies: None,
            unseen: UnseenPolicy::default(),
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn fit(&self, d: &Dataset) -> Result<FittedEncoder> {
        let default_k = || {
            d.level_counts()
                .iter()
                .filter(|&&c| c > 0)
                .count()
                .min(d.p())
        };
        let enc = match self.method {
            Method::Onehot
            | Method::Deviation
            | Method::Difference
            | Method::Helmert
            | Method::Repeated => {
                fit_contrast(self.method.contrast_scheme().expect("contrast method"), d)?
            }
            Method::Permutation => integer_encode(IntegerScheme::Permutation, d, self.seed, 1)?,
            Method::Multiperm => integer_encode(
                IntegerScheme::Multiperm,
                d,
                self.seed,
                self.copies.unwrap_or(4),
            )?,
            Method::Fisher => integer_encode(IntegerScheme::Fisher, d, self.seed, 1)?,
            Method::Means => fit_means(d)?,
            Method::Lowrank => fit_lowrank(d, self.k.unwrap_or_else(default_k))?,
            Method::Sparselowrank => fit_sparse_lowrank(
                d,
                self.k.unwrap_or_else(default_k),
                self.lambda,
                self.lambda1,
            )?,
            Method::Mnl => fit_mnl_encoder(d, self.reg)?,
        };
        Ok(enc.with_unseen_policy(self.unseen))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("L{i}")).collect()
    }

    fn random_dataset(n: usize, p: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<usize> = (0..n)
            .map(|i| if i < m { i } else { rng.random_range(0..m) })
            .collect();
        let x = DMatrix::from_fn(n, p, |i, j| {
            g[i] as f64 * 0.3 * (j as f64 + 1.0) + rng.random_range(-1.0..1.0)
        });
        let y = (0..n)
            .map(|i| x[(i, 0)] + rng.random_range(-0.5..0.5))
            .collect();
        Dataset::new(x, g, Some(y), names(m)).unwrap()
    }

    #[test]
    fn group_averages_small() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let gm = group_averages(&x, &[0, 0], 1).unwrap();
        assert_eq!(gm.omega.column(0).as_slice(), &[2.0, 3.0]);
        let gm = group_averages(&x, &[0, 1], 2).unwrap();
        assert_eq!(gm.omega.column(1).as_slice(), &[3.0, 4.0]);
        assert!(matches!(group_averages(&x, &[0, 0], 2), Err(Error::Fit(_))));
    }

    #[test]
    fn group_averages_loop_oracle() {
        let d = random_dataset(50, 3, 3, 1);
        let gm = group_averages(d.x(), d.g(), 3).unwrap();
        for l in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                let mut c = 0;
                for i in 0..50 {
                    if d.g()[i] == l {
                        s += d.x()[(i, j)];
                        c += 1;
                    }
                }
                assert!((gm.omega[(j, l)] - s / c as f64).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn means_examples() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let d = Dataset::new(x.clone(), vec![0, 0, 1], None, names(2)).unwrap();
        let s = fit_means(&d).unwrap().transform(&d).unwrap().s;
        assert_eq!(
            s,
            DMatrix::from_row_slice(3, 2, &[2.0, 3.0, 2.0, 3.0, 5.0, 6.0])
        );

        let d = Dataset::new(x, vec![0, 0, 0], None, names(1)).unwrap();
        let s = fit_means(&d).unwrap().transform(&d).unwrap().s;
        for i in 0..3 {
            assert_eq!(s.row(i).iter().cloned().collect::<Vec<_>>(), vec![3.0, 4.0]);
        }
    }

    #[test]
    fn means_matches_group_averages() {
        let d = random_dataset(80, 4, 6, 2);
        let enc = fit_means(&d).unwrap();
        let gm = group_averages(d.x(), d.g(), 6).unwrap();
        let s = enc.transform(&d).unwrap().s;
        for i in 0..80 {
            for j in 0..4 {
                assert_eq!(s[(i, j)], gm.omega[(j, d.g()[i])]);
            }
        }
    }

    #[test]
    fn lowrank_identity_omega() {
        // rows of x chosen so that Ω̂ᵀ = I₃
        let x = DMatrix::<f64>::identity(3, 3);
        let d = Dataset::new(x, vec![0, 1, 2], None, names(3)).unwrap();
        let enc = fit_lowrank(&d, 2).unwrap();
        let t = enc.table();
        for g in 0..3 {
            let row: Vec<f64> = t.row(g).iter().map(|v| v.abs()).collect();
            let mut expect = vec![0.0; 2];
            if g < 2 {
                expect[g] = 1.0;
            }
            assert_eq!(row, expect);
        }
    }

    #[test]
    fn lowrank_rank_one() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let d = Dataset::new(x, vec![0, 1, 2, 3], None, names(4)).unwrap();
        let enc = fit_lowrank(&d, 1).unwrap();
        for g in 0..4 {
            assert!((enc.table()[(g, 0)] - 0.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn lowrank_full_rank_reconstructs_means() {
        let d = random_dataset(120, 3, 8, 3);
        let enc = fit_lowrank(&d, 3).unwrap();
        let EncoderParams::LowRank { svd, k } = enc.params() else {
            panic!()
        };
        let u = svd.u.columns(0, *k);
        let mut us = u.into_owned();
        for j in 0..*k {
            us.column_mut(j).scale_mut(svd.d[j]);
        }
        let recon = us * svd.v.columns(0, *k).transpose();
        let gm = group_averages(d.x(), d.g(), 8).unwrap();
        assert!((recon - gm.omega.transpose()).amax() <= 1e-8);
        assert!(matches!(fit_lowrank(&d, 4), Err(Error::Dimension(_))));
        assert!(matches!(fit_lowrank(&d, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn sparse_lowrank_penalty_limits() {
        let d = random_dataset(150, 5, 10, 4);
        let big = 1e6
            * group_averages(d.x(), d.g(), 10)
                .unwrap()
                .omega
                .norm_squared();
        let enc = fit_sparse_lowrank(&d, 2, 0.0, big).unwrap();
        assert!(enc.table().iter().all(|&v| v == 0.0));
        assert_eq!(enc.output_dim(), 2);

        let enc = fit_sparse_lowrank(&d, 2, 0.0, 0.0).unwrap();
        let pca = fit_lowrank(&d, 2).unwrap();
        let proj = |m: &DMatrix<f64>| {
            let f = svd(m).unwrap();
            let u = f.u.columns(0, 2).into_owned();
            &u * u.transpose()
        };
        assert!((proj(enc.table()) - proj(pca.table())).amax() <= 1e-6);
    }

    #[test]
    fn mnl_encoder_rows() {
        let d = random_dataset(200, 2, 4, 5);
        let enc = fit_mnl_encoder(&d, 1e-8).unwrap();
        assert_eq!(enc.output_dim(), 3);
        let s = enc.transform(&d).unwrap().s;
        for i in 0..200 {
            if d.g()[i] == 3 {
                assert!(s.row(i).iter().all(|&v| v == 0.0));
            }
        }
        let one = Dataset::new(DMatrix::zeros(2, 1), vec![0, 0], None, names(1)).unwrap();
        assert!(matches!(fit_mnl_encoder(&one, 1e-8), Err(Error::Fit(_))));
    }

    #[test]
    fn mnl_uninformative_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 400;
        let g: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        // shuffle rows of x relative to g so they carry no information on average
        let d = Dataset::new(x, g, None, names(4)).unwrap();
        let enc = fit_mnl_encoder(&d, 1e-8).unwrap();
        // balanced design, small sample effects only
        assert!(enc.table().columns(1, 2).amax() < 0.5);

        let x = DMatrix::zeros(n, 2);
        let g: Vec<usize> = (0..n).map(|i| i % 4).collect();
        let d = Dataset::new(x, g, None, names(4)).unwrap();
        let enc = fit_mnl_encoder(&d, 1e-8).unwrap();
        assert!(enc.table().columns(1, 2).amax() <= 1e-4);
    }

    #[test]
    fn contrast_encoder_labels_and_rows() {
        let d = random_dataset(30, 1, 5, 7);
        let enc = fit_contrast(ContrastScheme::Onehot, &d).unwrap();
        assert_eq!(enc.output_dim(), 4);
        assert_eq!(enc.column_labels()[0], "g_L1");
        let s = enc.transform(&d).unwrap().s;
        for i in 0..30 {
            let expect = contrast_encode(ContrastScheme::Onehot, 5).unwrap();
            assert_eq!(s.row(i), expect.row(d.g()[i]));
        }
    }

    #[test]
    fn integer_encoders() {
        let d = random_dataset(40, 1, 5, 8);
        let enc = integer_encode(IntegerScheme::Multiperm, &d, 3, 4).unwrap();
        assert_eq!(enc.output_dim(), 4);
        let enc = integer_encode(IntegerScheme::Permutation, &d, 3, 9).unwrap();
        assert_eq!(enc.output_dim(), 1);
        let no_y = Dataset::new(d.x().clone(), d.g().to_vec(), None, names(5)).unwrap();
        assert!(matches!(
            integer_encode(IntegerScheme::Fisher, &no_y, 0, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unseen_levels() {
        let d = random_dataset(60, 2, 4, 9);
        let train_rows: Vec<usize> = (0..60).filter(|&i| d.g()[i] != 2).collect();
        let test_rows: Vec<usize> = (0..60).filter(|&i| d.g()[i] == 2).collect();
        let train = d.split_rows(&train_rows).unwrap();
        let test = d.split_rows(&test_rows).unwrap();

        let enc = fit_means(&train).unwrap();
        let s = enc.transform(&test).unwrap().s;
        let mean = column_means(train.x());
        for i in 0..test.n() {
            assert_eq!(s.row(i).iter().cloned().collect::<Vec<_>>(), mean);
        }
        let strict = enc.with_unseen_policy(UnseenPolicy::Error);
        match strict.transform(&test) {
            Err(Error::UnseenLevel(l)) => assert_eq!(l, "L2"),
            other => panic!("{other:?}"),
        }

        let s = fit_lowrank(&train, 2).unwrap().transform(&test).unwrap().s;
        assert!(s.iter().all(|&v| v == 0.0));
        let s = integer_encode(IntegerScheme::Permutation, &train, 1, 1)
            .unwrap()
            .transform(&test)
            .unwrap()
            .s;
        assert!(s.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn duplicated_row_duplicates_code() {
        let d = random_dataset(40, 3, 5, 10);
        let mut rows: Vec<usize> = (0..40).collect();
        rows.push(0);
        let x = d.x().select_rows(rows.iter());
        let g: Vec<usize> = rows.iter().map(|&r| d.g()[r]).collect();
        let y: Vec<f64> = rows.iter().map(|&r| d.y().unwrap()[r]).collect();
        let dup = Dataset::new(x, g, Some(y), names(5)).unwrap();
        for method in Method::ALL {
            let enc = EncoderSpec::new(method).fit(&d).unwrap();
            let s = enc.transform(&dup).unwrap().s;
            assert_eq!(s.row(40), s.row(0), "{method}");
        }
    }
}
