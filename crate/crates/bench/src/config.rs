//! Experiment configuration (TOML).
//!
//! ```toml
//! name = "desk-pose"
//!
//! [problem]
//! kind = "pose"
//!
//! [run]
//! max_iterations = 500
//!
//! [[arm]]
//! name = "OCP-LS"
//! algorithm = "ocp_ls"
//! step_size = 0.01
//! ```
//!
//! Everything except `problem.kind` has a default; unknown keys are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ocpls_core::optimizer::InnerMode;
use ocpls_core::problems::{Activation, SceneSpec};
use ocpls_core::{AdamWConfig, OcpLsConfig, SophiaConfig};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, BenchResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub robustness: RobustnessSpec,
    #[serde(default, rename = "arm")]
    pub arms: Vec<ArmSpec>,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Pose,
    Quadratic,
    Rosenbrock,
}

/// Problem description. Pose fields are ignored by the analytic problems and
/// vice versa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Label used in the summary's `dataset` column.
    pub dataset: String,
    pub seed: u64,

    // pose
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub feature_dim: usize,
    pub radius: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init_s_p: f64,
    pub init_s_q: f64,
    /// Scene CSV written by `gen-data`; replaces the generated scene.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,

    // quadratic / rosenbrock
    pub dim: usize,
    pub eig_min: f64,
    pub eig_max: f64,
    pub lambda_reg: f64,
    pub rotate: bool,
    /// Scale of the random linear term `b`.
    pub b_scale: f64,
    /// Scale of the random offset of `x0` from the minimizer (quadratic) or
    /// from the standard start (rosenbrock).
    pub x0_scale: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        let scene = SceneSpec::default();
        Self {
            kind: ProblemKind::Pose,
            dataset: "synthetic-loop".into(),
            seed: 0,
            noise_sigma: scene.noise_sigma,
            n_train: scene.n_train,
            n_val: scene.n_val,
            feature_dim: scene.feature_dim,
            radius: scene.radius,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            init_s_p: 0.0,
            init_s_q: -3.0,
            data: None,
            dim: 10,
            eig_min: 1.0,
            eig_max: 4.0,
            lambda_reg: 0.0,
            rotate: true,
            b_scale: 0.0,
            x0_scale: 1.0,
        }
    }
}

impl ProblemSpec {
    pub fn scene(&self) -> SceneSpec {
        SceneSpec {
            n_train: self.n_train,
            n_val: self.n_val,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            feature_dim: self.feature_dim,
            radius: self.radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub max_iterations: u64,
    pub batch_size: usize,
    /// Validation loss is logged every `val_interval` steps and at the end.
    pub val_interval: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Extra evaluation points; the final iteration is always evaluated.
    pub checkpoints: Vec<u64>,
    /// Wall-clock column; off by default so record files are reproducible.
    pub record_elapsed: bool,
    pub parallel: bool,
    /// Gradient-difference pairs for the smoothness estimate.
    pub beta_pairs: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            batch_size: 32,
            val_interval: 10,
            out_dir: None,
            checkpoints: vec![50, 150],
            record_elapsed: false,
            parallel: true,
            beta_pairs: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessSpec {
    /// Feature-noise levels applied to the validation set after training.
    pub noise_levels: Vec<f64>,
}

impl Default for RobustnessSpec {
    fn default() -> Self {
        Self { noise_levels: vec![0.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    OcpLs,
    Adamw,
    Sophia,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::OcpLs => "ocp_ls",
            Algorithm::Adamw => "adamw",
            Algorithm::Sophia => "sophia",
        }
    }
}

/// `inner_cap = 10` or `inner_cap = "none"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InnerCap {
    Limit(u32),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub name: String,
    pub algorithm: Algorithm,
    /// `α` for OCP-LS, the learning rate for the baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_mode: Option<InnerMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_cap: Option<InnerCap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl ArmSpec {
    pub fn new(name: &str, algorithm: Algorithm) -> Self {
        Self {
            name: name.into(),
            algorithm,
            step_size: None,
            beta1: None,
            beta2: None,
            weight_decay: None,
            clamp_floor: None,
            inner_mode: None,
            inner_cap: None,
            eps: None,
            rho: None,
        }
    }
}

/// Fully resolved optimizer settings of one arm.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerSpec {
    OcpLs(OcpLsConfig),
    AdamW(AdamWConfig),
    Sophia(SophiaConfig),
}

impl OptimizerSpec {
    pub fn from_arm(arm: &ArmSpec) -> BenchResult<Self> {
        let invalid = |field: &str, why: String| BenchError::Validation {
            field: format!("arm '{}'.{field}", arm.name),
            message: why,
        };
        let not_for = |field: &str| invalid(field, format!("does not apply to algorithm {}", arm.algorithm.as_str()));
        let spec = match arm.algorithm {
            Algorithm::OcpLs => {
                for (field, set) in [("eps", arm.eps.is_some()), ("rho", arm.rho.is_some())] {
                    if set {
                        return Err(not_for(field));
                    }
                }
                let mut cfg = OcpLsConfig::default();
                cfg.alpha = arm.step_size.unwrap_or(cfg.alpha);
                cfg.beta1 = arm.beta1.unwrap_or(cfg.beta1);
                cfg.beta2 = arm.beta2.unwrap_or(cfg.beta2);
                cfg.lambda = arm.weight_decay.unwrap_or(cfg.lambda);
                cfg.clamp_floor = arm.clamp_floor.unwrap_or(cfg.clamp_floor);
                cfg.inner_mode = arm.inner_mode.unwrap_or(cfg.inner_mode);
                cfg.inner_cap = match &arm.inner_cap {
                    None => cfg.inner_cap,
                    Some(InnerCap::Limit(n)) => Some(*n),
                    Some(InnerCap::Keyword(k)) if k == "none" => None,
                    Some(InnerCap::Keyword(k)) => {
                        return Err(invalid("inner_cap", format!("expected an integer or \"none\", got \"{k}\"")))
                    }
                };
                cfg.validate().map_err(|e| invalid("settings", e.to_string()))?;
                OptimizerSpec::OcpLs(cfg)
            }
            Algorithm::Adamw | Algorithm::Sophia => {
                for (field, set) in [
                    ("clamp_floor", arm.clamp_floor.is_some()),
                    ("inner_mode", arm.inner_mode.is_some()),
                    ("inner_cap", arm.inner_cap.is_some()),
                ] {
                    if set {
                        return Err(not_for(field));
                    }
                }
                if arm.algorithm == Algorithm::Adamw {
                    if arm.rho.is_some() {
                        return Err(not_for("rho"));
                    }
                    let mut cfg = AdamWConfig::default();
                    cfg.lr = arm.step_size.unwrap_or(cfg.lr);
                    cfg.beta1 = arm.beta1.unwrap_or(cfg.beta1);
                    cfg.beta2 = arm.beta2.unwrap_or(cfg.beta2);
                    cfg.eps = arm.eps.unwrap_or(cfg.eps);
                    cfg.weight_decay = arm.weight_decay.unwrap_or(cfg.weight_decay);
                    cfg.validate().map_err(|e| invalid("settings", e.to_string()))?;
                    OptimizerSpec::AdamW(cfg)
                } else {
                    let mut cfg = SophiaConfig::default();
                    cfg.lr = arm.step_size.unwrap_or(cfg.lr);
                    cfg.beta1 = arm.beta1.unwrap_or(cfg.beta1);
                    cfg.beta2 = arm.beta2.unwrap_or(cfg.beta2);
                    cfg.eps = arm.eps.unwrap_or(cfg.eps);
                    cfg.rho = arm.rho.unwrap_or(cfg.rho);
                    cfg.weight_decay = arm.weight_decay.unwrap_or(cfg.weight_decay);
                    cfg.validate().map_err(|e| invalid("settings", e.to_string()))?;
                    OptimizerSpec::Sophia(cfg)
                }
            }
        };
        Ok(spec)
    }
}

/// The three comparison arms used when a config lists none. Step sizes were
/// picked for the desk-scale pose task; they are not taken from any
/// published training protocol.
pub fn default_arms() -> Vec<ArmSpec> {
    vec![
        ArmSpec {
            step_size: Some(DEFAULT_OCP_LS_STEP),
            ..ArmSpec::new("OCP-LS", Algorithm::OcpLs)
        },
        ArmSpec {
            step_size: Some(DEFAULT_ADAMW_STEP),
            ..ArmSpec::new("AdamW", Algorithm::Adamw)
        },
        ArmSpec {
            step_size: Some(DEFAULT_SOPHIA_STEP),
            ..ArmSpec::new("Sophia", Algorithm::Sophia)
        },
    ]
}

pub const DEFAULT_OCP_LS_STEP: f64 = 1e-2;
pub const DEFAULT_ADAMW_STEP: f64 = 3e-3;
pub const DEFAULT_SOPHIA_STEP: f64 = 3e-3;

impl ExperimentConfig {
    /// Minimal config for `kind` with every default filled in.
    pub fn for_kind(kind: ProblemKind) -> Self {
        let mut cfg = Self {
            name: default_name(),
            problem: ProblemSpec { kind, ..ProblemSpec::default() },
            run: RunSpec::default(),
            robustness: RobustnessSpec::default(),
            arms: Vec::new(),
        };
        cfg.fill_defaults();
        cfg
    }

    pub fn fill_defaults(&mut self) {
        if self.arms.is_empty() {
            self.arms = default_arms();
        }
    }

    pub fn validate(&self) -> BenchResult<()> {
        let field = |f: &str, m: &str| {
            Err(BenchError::Validation {
                field: f.into(),
                message: m.into(),
            })
        };
        if self.run.max_iterations < 1 {
            return field("run.max_iterations", "must be >= 1");
        }
        if self.run.batch_size < 1 {
            return field("run.batch_size", "must be >= 1");
        }
        if self.run.val_interval < 1 {
            return field("run.val_interval", "must be >= 1");
        }
        if self.arms.is_empty() {
            return field("arm", "at least one arm is required");
        }
        let mut seen = HashSet::new();
        for arm in &self.arms {
            if arm.name.trim().is_empty() {
                return field("arm.name", "must not be empty");
            }
            if !seen.insert(arm.name.as_str()) {
                return Err(BenchError::Validation {
                    field: "arm.name".into(),
                    message: format!("duplicate arm name '{}'", arm.name),
                });
            }
            OptimizerSpec::from_arm(arm)?;
        }
        if self.robustness.noise_levels.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return field("robustness.noise_levels", "levels must be finite and >= 0");
        }
        let p = &self.problem;
        match p.kind {
            ProblemKind::Pose => {
                if p.data.is_none() && (p.n_train == 0 || p.n_val == 0) {
                    return field("problem.n_train", "n_train and n_val must be >= 1");
                }
                if p.feature_dim == 0 {
                    return field("problem.feature_dim", "must be >= 1");
                }
                if p.hidden.iter().any(|&h| h == 0) {
                    return field("problem.hidden", "layer widths must be >= 1");
                }
                if !(p.noise_sigma >= 0.0) {
                    return field("problem.noise_sigma", "must be >= 0");
                }
                if !(p.radius > 0.0) {
                    return field("problem.radius", "must be > 0");
                }
            }
            ProblemKind::Quadratic => {
                if p.dim == 0 {
                    return field("problem.dim", "must be >= 1");
                }
                if !(p.eig_min > 0.0 && p.eig_max >= p.eig_min && p.eig_max.is_finite()) {
                    return field("problem.eig_min", "need 0 < eig_min <= eig_max < inf");
                }
                if !(p.lambda_reg >= 0.0) {
                    return field("problem.lambda_reg", "must be >= 0");
                }
            }
            ProblemKind::Rosenbrock => {
                if p.dim < 2 {
                    return field("problem.dim", "rosenbrock needs dim >= 2");
                }
            }
        }
        Ok(())
    }

    /// Resolved settings per arm, in config order.
    pub fn optimizer_specs(&self) -> BenchResult<Vec<(String, OptimizerSpec)>> {
        self.arms
            .iter()
            .map(|a| OptimizerSpec::from_arm(a).map(|s| (a.name.clone(), s)))
            .collect()
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> BenchResult<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| BenchError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> BenchResult<String> {
        toml::to_string(self).map_err(|e| BenchError::Validation {
            field: "config".into(),
            message: e.to_string(),
        })
    }
}

pub fn load_config(path: &Path) -> BenchResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text, path)
}

pub fn load_scene_spec(path: &Path) -> BenchResult<SceneSpec> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    struct Wire {
        n_train: usize,
        n_val: usize,
        noise_sigma: f64,
        seed: u64,
        feature_dim: usize,
        radius: f64,
    }
    impl Default for Wire {
        fn default() -> Self {
            let s = SceneSpec::default();
            Self {
                n_train: s.n_train,
                n_val: s.n_val,
                noise_sigma: s.noise_sigma,
                seed: s.seed,
                feature_dim: s.feature_dim,
                radius: s.radius,
            }
        }
    }
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let w: Wire = toml::from_str(&text).map_err(|e| BenchError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(SceneSpec {
        n_train: w.n_train,
        n_val: w.n_val,
        noise_sigma: w.noise_sigma,
        seed: w.seed,
        feature_dim: w.feature_dim,
        radius: w.radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> BenchResult<ExperimentConfig> {
        ExperimentConfig::from_toml_str(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse("[problem]\nkind = \"pose\"\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::for_kind(ProblemKind::Pose));
        assert_eq!(cfg.arms.len(), 3);
        assert_eq!(cfg.run.max_iterations, 500);
        assert_eq!(cfg.run.checkpoints, vec![50, 150]);
    }

    #[test]
    fn duplicate_arm_names_rejected() {
        let text = r#"
[problem]
kind = "quadratic"

[[arm]]
name = "a"
algorithm = "ocp_ls"

[[arm]]
name = "a"
algorithm = "adamw"
"#;
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("duplicate arm name 'a'"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let err = parse("[problem]\nkind = \"pose\"\n\n[run]\nmax_iters = 3\n").unwrap_err().to_string();
        assert!(err.contains("max_iters"), "{err}");
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let err = parse("[problem]\nkind = \"pose\"\n[run]\nbatch_size = 0\n").unwrap_err().to_string();
        assert!(err.contains("run.batch_size"), "{err}");
        let err = parse("[problem]\nkind = \"pose\"\n[[arm]]\nname = \"x\"\nalgorithm = \"adamw\"\nclamp_floor = 1.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("arm 'x'.clamp_floor"), "{err}");
        let err = parse("[problem]\nkind = \"pose\"\n[[arm]]\nname = \"x\"\nalgorithm = \"ocp_ls\"\nbeta1 = 1.5\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("beta1"), "{err}");
    }

    #[test]
    fn round_trip() {
        let text = r#"
name = "rt"

[problem]
kind = "quadratic"
dim = 4
seed = 9

[run]
max_iterations = 20
out_dir = "somewhere"

[robustness]
noise_levels = [0.0, 0.1, 0.2]

[[arm]]
name = "ocp"
algorithm = "ocp_ls"
step_size = 0.25
inner_cap = "none"
inner_mode = "recursion"

[[arm]]
name = "soph"
algorithm = "sophia"
rho = 0.5
"#;
        let cfg = parse(text).unwrap();
        let again = parse(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
        let specs = cfg.optimizer_specs().unwrap();
        match &specs[0].1 {
            OptimizerSpec::OcpLs(c) => {
                assert_eq!(c.inner_cap, None);
                assert_eq!(c.alpha, 0.25);
                assert_eq!(c.inner_mode, InnerMode::Recursion);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_inner_cap_keyword() {
        let err = parse("[problem]\nkind = \"pose\"\n[[arm]]\nname = \"x\"\nalgorithm = \"ocp_ls\"\ninner_cap = \"all\"\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("inner_cap"), "{err}");
    }
}
