//! Dense numerical kernels: SVD, pseudo-inverse, sparse PCA and
//! multinomial-logit maximum likelihood.

pub mod mnl;
pub mod spca;
pub mod svd;

pub use mnl::{fit_mnl, fit_mnl_with, MnlModel, MnlOptions};
pub use spca::{sparse_pca, sparse_pca_with, SpcaFactors, SpcaOptions};
pub use svd::{pseudo_inverse, svd, SvdFactors, PINV_RTOL};
