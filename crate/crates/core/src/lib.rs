//! Sufficient low-dimensional encodings for high-cardinality categorical variables.
//!
//! The crate replaces a categorical column `G` by a handful of real-valued
//! columns learned from the continuous covariates `X`:
//!
//! * [`encoders`]: group means, low-rank (SVD) and sparse low-rank (sparse
//!   PCA) factorizations of the group-means matrix, multinomial-logit
//!   coefficients, and the classic contrast/integer baselines.
//! * [`numlin`]: the numerical kernels behind them.
//! * [`sim`]: a latent-class simulator with ground-truth latent labels.
//! * [`oracle`]: a fully enumerable latent world where the sufficiency
//!   identities can be checked exactly.
//! * [`eval`]: k-NN learner, stratified folds, paired t-test and the
//!   benchmark driver.
//!
//! Data-parallel loops go through [`par`]; with the `parallel` feature
//! disabled everything runs sequentially and produces identical results.

pub mod data;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod numlin;
pub mod oracle;
pub mod par;
pub mod rng;
mod serde_mat;
pub mod sim;

pub use data::{ColumnSchema, Dataset, Role};
pub use encoders::{FittedEncoder, Method, UnseenPolicy};
pub use error::{Error, ErrorClass, Result};
pub use par::Execution;
