//! Diagonal second-order optimizer with a truncated inner Newton series,
//! curvature estimators, baselines, test problems and convergence checks.

pub mod curvature;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod optimizer;
pub mod param;
pub mod problems;
pub mod theory;

pub use error::{Error, Result};
pub use optimizer::{AdamW, AdamWConfig, OcpLs, OcpLsConfig, Optimizer, Sophia, SophiaConfig};
pub use param::ParamVector;
pub use problems::Objective;
