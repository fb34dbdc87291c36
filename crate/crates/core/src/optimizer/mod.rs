//! Optimizers: OCP-LS and the two comparison baselines.
//!
//! Each algorithm is a pure `(state, x, g, cfg) -> (x', state')` function.
//! [`Optimizer`] wraps them in a stateful object for the training loop.

pub mod adamw;
pub mod ocp_ls;
pub mod sophia;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use ocp_ls::{
    bias_correct, clamp_curvature, ema_update, phi_closed_form, phi_closed_form_counted, phi_recursion, step,
    step_with_curvature, InnerMode, OcpLsConfig, OptimizerState, StepOutput, RATIO_MARGIN,
};
pub use sophia::{sophia_step, SophiaConfig, SophiaState};

use crate::error::Result;
use crate::param::ParamVector;

pub trait Optimizer: Send {
    /// Consumes the gradient at `x` and returns the next iterate.
    fn step(&mut self, x: &ParamVector, g: &ParamVector) -> Result<ParamVector>;

    /// Completed steps.
    fn iteration(&self) -> u64;

    /// Cumulative clamp/clip bindings; zero for algorithms without one.
    fn clamp_hits(&self) -> u64 {
        0
    }

    /// Bias-corrected curvature diagonal used by the last step, if any.
    fn curvature(&self) -> Option<&ParamVector> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct OcpLs {
    pub cfg: OcpLsConfig,
    pub state: OptimizerState,
    last_h_hat: Option<ParamVector>,
}

impl OcpLs {
    pub fn new(dim: usize, cfg: OcpLsConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: OptimizerState::new(dim),
            last_h_hat: None,
        })
    }

    /// Step with an externally estimated curvature diagonal in place of `g ⊙ g`.
    pub fn step_with(&mut self, x: &ParamVector, g: &ParamVector, h_raw: &ParamVector) -> Result<ParamVector> {
        let out = step_with_curvature(&self.state, x, g, h_raw, &self.cfg)?;
        self.state = out.state;
        self.last_h_hat = Some(out.h_hat);
        Ok(out.x)
    }
}

impl Optimizer for OcpLs {
    fn step(&mut self, x: &ParamVector, g: &ParamVector) -> Result<ParamVector> {
        let h = g.hadamard(g)?;
        self.step_with(x, g, &h)
    }

    fn iteration(&self) -> u64 {
        self.state.k
    }

    fn clamp_hits(&self) -> u64 {
        self.state.clamp_hits
    }

    fn curvature(&self) -> Option<&ParamVector> {
        self.last_h_hat.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub state: AdamWState,
}

impl AdamW {
    pub fn new(dim: usize, cfg: AdamWConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: AdamWState::new(dim),
        })
    }
}

impl Optimizer for AdamW {
    fn step(&mut self, x: &ParamVector, g: &ParamVector) -> Result<ParamVector> {
        let (x_next, state) = adamw_step(&self.state, x, g, &self.cfg)?;
        self.state = state;
        Ok(x_next)
    }

    fn iteration(&self) -> u64 {
        self.state.k
    }
}

#[derive(Debug, Clone)]
pub struct Sophia {
    pub cfg: SophiaConfig,
    pub state: SophiaState,
}

impl Sophia {
    pub fn new(dim: usize, cfg: SophiaConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: SophiaState::new(dim),
        })
    }
}

impl Optimizer for Sophia {
    fn step(&mut self, x: &ParamVector, g: &ParamVector) -> Result<ParamVector> {
        let (x_next, state) = sophia_step(&self.state, x, g, &self.cfg)?;
        self.state = state;
        Ok(x_next)
    }

    fn iteration(&self) -> u64 {
        self.state.k
    }

    fn clamp_hits(&self) -> u64 {
        self.state.clip_hits
    }
}
