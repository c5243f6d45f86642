//! Functional differencing for network data.
//!
//! Moment functions whose conditional expectation given two-sided latent
//! heterogeneity is zero (or a known target), for Gaussian linear models with
//! additive worker and firm effects and for logit models on networks:
//!
//! * [`netcore`]: edge lists, heterogeneity designs, and subnetwork patterns.
//! * [`linalg`]: SVD-backed pseudo-inverse, projectors, and rank.
//! * [`linmodel`]: quasi-differencing, degree-of-freedom and trace-corrected
//!   estimators, and an exact Gaussian expectation oracle.
//! * [`logitmodel`]: sufficient-statistic level sets, moment discovery,
//!   closed-form moment families, enumeration checks, and GMM for `theta`.
//! * [`avgeff`]: average partial effects for movers and numerical
//!   impossibility certificates.
//! * [`simkit`]: data-generating processes and Monte Carlo studies.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod avgeff;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod linmodel;
pub mod logitmodel;
pub mod netcore;
pub mod simkit;

pub use error::{Error, Result};
pub use estimate::{Estimate, EstimateResult};
