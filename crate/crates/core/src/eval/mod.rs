//! k-NN learner, stratified folds, metrics and the benchmark driver.

pub mod bench;
pub mod folds;
pub mod knn;
pub mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encoders::FittedEncoder;
use crate::error::{Error, Result};
use crate::par::Execution;

pub use bench::{run_benchmark, BenchConfig, BenchReport, DataSource, MethodEntry};
pub use folds::{stratified_kfold, FoldPlan};
pub use knn::{knn_regress, sqrt_k, CodedFeatures, PreparedFold};
pub use stats::{mse, paired_t_test, percent_improvement, TTest};

/// How the number of neighbours is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerK {
    /// `round(√n_train)`.
    #[default]
    Sqrt,
    Fixed(usize),
    /// Inner cross-validation over `{1, 3, 5, √n, 2√n}`.
    InnerCv,
}

impl LearnerK {
    /// Neighbour count for a training set of `n_train` rows; the grid
    /// option falls back to the square-root rule.
    pub fn resolve(self, n_train: usize) -> usize {
        match self {
            LearnerK::Fixed(k) => k,
            LearnerK::Sqrt | LearnerK::InnerCv => sqrt_k(n_train),
        }
    }

    pub fn grid(n_train: usize) -> Vec<usize> {
        let r = sqrt_k(n_train);
        let mut ks = vec![1, 3, 5, r, 2 * r];
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

impl fmt::Display for LearnerK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerK::Sqrt => f.write_str("sqrt"),
            LearnerK::Fixed(k) => write!(f, "{k}"),
            LearnerK::InnerCv => f.write_str("inner-cv"),
        }
    }
}

impl FromStr for LearnerK {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(LearnerK::Sqrt),
            "inner-cv" | "cv" => Ok(LearnerK::InnerCv),
            _ => match s.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(LearnerK::Fixed(k)),
                _ => Err(Error::Config(format!(
                    "learner k must be 'sqrt', 'inner-cv' or a positive integer, got '{s}'"
                ))),
            },
        }
    }
}

/// k-NN predictions for `test` with `enc`'s columns appended to the
/// covariates of `fold`.
pub fn predict_with_encoder(
    fold: &PreparedFold,
    enc: &FittedEncoder,
    train: &Dataset,
    test: &Dataset,
    k: usize,
    exec: Execution,
) -> Result<Vec<f64>> {
    let table = enc.table_with_fallback();
    let train_codes = enc.codes(train)?;
    let test_codes = enc.codes(test)?;
    fold.predict_coded(
        CodedFeatures {
            table: &table,
            train: &train_codes,
            test: &test_codes,
        },
        k,
        exec,
    )
}
