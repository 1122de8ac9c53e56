//! Estimation of optimal dynamic monitoring and add-on treatment regimes.
//!
//! A regime decides at each visit time whether a subject is seen, and if seen
//! whether an add-on therapy starts. Stage blips are estimated by backward
//! induction with weighted ordinary least squares, either with balancing
//! weights from a multinomial propensity model or with an outcome-model
//! augmentation of the treatment-free mean.
//!
//! The numeric kernels ([`glm`], [`linalg`], the weight formulas and the
//! decision rule) are generic over [`Scalar`]; the cohort and pipeline layers
//! work in `f64`, and the aliases below name the common instantiations.

pub mod config;
pub mod engine;
pub mod glm;
pub mod linalg;
pub mod missing;
pub mod panel;
pub mod scalar;
pub mod sim;
pub mod study;
pub mod weights;

pub use scalar::Scalar;

pub type Design = glm::DesignMatrix<f64>;
pub type Fit = glm::FitResult<f64>;
pub type Mat = linalg::Matrix<f64>;
pub type Design32 = glm::DesignMatrix<f32>;
pub type Fit32 = glm::FitResult<f32>;
