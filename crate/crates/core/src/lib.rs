//! Distributional regression for hedonic price modeling.
//!
//! Location and dispersion submodels with parametric and cubic-spline
//! additive terms are fitted by penalized maximum likelihood ([`engine`]).
//! Normal linear regression and the gamma GLM serve as baselines
//! ([`baselines`]); [`diagnostics`] provides the deviance-based criteria,
//! quantile residuals and worm plots used to compare them.

pub mod baselines;
pub mod data;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod families;
pub mod formula;
pub mod linalg;
pub mod math;
pub mod simulate;
pub mod smoothers;

pub use error::{Error, Result};
