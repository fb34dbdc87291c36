//! Objective suite: quadratics with known constants, chained Rosenbrock,
//! linear least squares (the GNB oracle target), and the synthetic
//! pose-regression task.

pub mod least_squares;
pub mod pose;
pub mod quadratic;
pub mod rosenbrock;
pub mod scene;

pub use least_squares::LinearLeastSquares;
pub use pose::{pose_loss, pose_loss_grad, pose_loss_parts, Activation, PoseLossParams, PoseLossParts, PoseRegression, PoseSample, TinyRegressor};
pub use quadratic::QuadraticProblem;
pub use rosenbrock::Rosenbrock;
pub use scene::{make_synthetic_scene, perturb_features, SceneSpec};

use crate::error::Result;
use crate::param::ParamVector;

/// A differentiable objective, optionally defined as a mean over samples.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Full objective value and gradient.
    fn value_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)>;

    fn value(&self, x: &ParamVector) -> Result<f64> {
        self.value_grad(x).map(|(f, _)| f)
    }

    /// Known optimal value, when available in closed form.
    fn optimum_value(&self) -> Option<f64> {
        None
    }

    /// Number of samples for mini-batching; zero for deterministic objectives.
    fn n_samples(&self) -> usize {
        0
    }

    /// Value and gradient over a mini-batch. Deterministic objectives ignore
    /// `batch`.
    fn batch_value_grad(&self, x: &ParamVector, _batch: &[usize]) -> Result<(f64, ParamVector)> {
        self.value_grad(x)
    }
}
