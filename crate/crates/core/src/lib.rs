//! Exact moment-space certification and GMM estimation for dynamic panel
//! logit models with fixed effects.

pub mod error;
pub mod exact_linalg;
pub mod builders;
pub mod draws;
pub mod model;
pub mod poly;
pub mod moments;
pub mod gmm;
pub mod experiments;
pub mod report;
pub mod cli;

pub use error::{Error, Result};
pub use exact_linalg::{Rational, RationalMatrix};
pub use model::{ExpParams, ModelSpec, Outcome};
