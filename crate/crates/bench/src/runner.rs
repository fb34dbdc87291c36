//! Runs every arm of an experiment on the same problem, initial point and
//! mini-batch schedule.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ocpls_core::metrics::ErrorSummary;
use ocpls_core::problems::{
    make_synthetic_scene, perturb_features, PoseLossParams, PoseRegression, PoseSample, QuadraticProblem, Rosenbrock,
    TinyRegressor,
};
use ocpls_core::theory::{
    check_a3, check_rate_preconditions, estimate_beta, fit_empirical_rate, monotonicity_violations, mu_pl_from_samples,
    rho_infinity, RateReport,
};
use ocpls_core::{AdamW, Objective, OcpLs, Optimizer, ParamVector, Sophia};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{ExperimentConfig, OptimizerSpec, ProblemKind};
use crate::error::{BenchError, BenchResult};
use crate::io::{fmt_g, read_scene, write_records, write_rows, write_summary, RunRecord, SummaryRow};

/// Independent random streams derived from the experiment seed.
mod stream {
    pub const INIT: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const X0: u64 = 3;
    pub const BETA: u64 = 4;
    pub const ROBUSTNESS: u64 = 16;
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub enum Task {
    Pose {
        problem: PoseRegression,
        val: Vec<PoseSample>,
    },
    Quadratic(QuadraticProblem),
    Rosenbrock(Rosenbrock),
}

impl Task {
    pub fn objective(&self) -> &dyn Objective {
        match self {
            Task::Pose { problem, .. } => problem,
            Task::Quadratic(q) => q,
            Task::Rosenbrock(r) => r,
        }
    }

    /// Optimality gap at `x`, when the optimum is known.
    fn gap(&self, x: &ParamVector, value: f64) -> Option<f64> {
        match self {
            Task::Quadratic(q) => q.gap(x).ok(),
            _ => self.objective().optimum_value().map(|f| value - f),
        }
    }
}

/// Builds the problem and the shared starting point.
pub fn build_task(cfg: &ExperimentConfig) -> BenchResult<(Task, ParamVector)> {
    let p = &cfg.problem;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(p.seed, stream::X0));
    let mut gaussian = |n: usize, scale: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect()
    };
    Ok(match p.kind {
        ProblemKind::Pose => {
            let (train, val) = match &p.data {
                Some(path) => read_scene(path)?,
                None => make_synthetic_scene(&p.scene())?,
            };
            if train.is_empty() || val.is_empty() {
                return Err(BenchError::Validation {
                    field: "problem.data".into(),
                    message: "scene needs at least one train and one val sample".into(),
                });
            }
            let input_dim = train[0].feature.len();
            let model = TinyRegressor::new(input_dim, p.hidden.clone(), p.activation)?;
            let x0 = model.init_params(
                derive_seed(p.seed, stream::INIT),
                PoseLossParams {
                    s_p: p.init_s_p,
                    s_q: p.init_s_q,
                },
            );
            let problem = PoseRegression::new(model, train)?;
            (Task::Pose { problem, val }, x0)
        }
        ProblemKind::Quadratic => {
            let b = ParamVector::new(gaussian(p.dim, p.b_scale));
            let eigs: Vec<f64> = (0..p.dim)
                .map(|i| {
                    if p.dim == 1 {
                        p.eig_min
                    } else {
                        p.eig_min * (p.eig_max / p.eig_min).powf(i as f64 / (p.dim - 1) as f64)
                    }
                })
                .collect();
            let q = if p.rotate {
                QuadraticProblem::rotated(eigs, b, p.lambda_reg, p.seed)?
            } else {
                QuadraticProblem::diagonal(eigs, b, p.lambda_reg)?
            };
            let x0 = q.x_star().scale_add(1.0, &ParamVector::new(gaussian(p.dim, p.x0_scale)))?;
            (Task::Quadratic(q), x0)
        }
        ProblemKind::Rosenbrock => {
            let base: Vec<f64> = (0..p.dim).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect();
            let x0 = ParamVector::new(base).scale_add(1.0, &ParamVector::new(gaussian(p.dim, p.x0_scale)))?;
            (Task::Rosenbrock(Rosenbrock::new(p.dim)?), x0)
        }
    })
}

/// Mini-batch indices per iteration, shared by all arms. Each batch is drawn
/// without replacement; deterministic objectives get empty batches.
pub fn batch_schedule(n_samples: usize, batch_size: usize, iterations: u64, seed: u64) -> Vec<Vec<usize>> {
    if n_samples == 0 {
        return vec![Vec::new(); iterations as usize];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::BATCHES));
    let size = batch_size.min(n_samples);
    (0..iterations).map(|_| sample(&mut rng, n_samples, size).into_vec()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArmStatus {
    Completed,
    Diverged { at: u64, reason: String },
}

impl ArmStatus {
    pub fn label(&self) -> &'static str {
        match self {
            ArmStatus::Completed => "completed",
            ArmStatus::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub name: String,
    pub status: ArmStatus,
    pub records: Vec<RunRecord>,
    /// `(k, row)` at each configured checkpoint that was reached.
    pub checkpoints: Vec<(u64, SummaryRow)>,
    pub summary: SummaryRow,
    pub robustness: Vec<SummaryRow>,
    pub rate: RateReport,
    /// Full training objective at `x0` and at the last iterate.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub clamp_hits: u64,
    /// Gap increases on a quadratic once the rate constants validate.
    pub descent_violations: Option<usize>,
    pub final_x: ParamVector,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: String,
    pub dataset: String,
    pub arms: Vec<ArmResult>,
}

impl ExperimentResult {
    pub fn all_diverged(&self) -> bool {
        self.arms.iter().all(|a| a.status != ArmStatus::Completed)
    }

    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.name == name)
    }
}

struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    task: &'a Task,
    x0: &'a ParamVector,
    schedule: &'a [Vec<usize>],
    beta_est: f64,
    /// `(level, perturbed validation set)`.
    robustness_sets: Vec<(f64, Vec<PoseSample>)>,
}

fn make_optimizer(spec: &OptimizerSpec, dim: usize) -> BenchResult<Box<dyn Optimizer>> {
    Ok(match spec {
        OptimizerSpec::OcpLs(c) => Box::new(OcpLs::new(dim, c.clone())?),
        OptimizerSpec::AdamW(c) => Box::new(AdamW::new(dim, c.clone())?),
        OptimizerSpec::Sophia(c) => Box::new(Sophia::new(dim, c.clone())?),
    })
}

fn summary_for(shared: &Shared, arm: &str, x: &ParamVector, samples: Option<&[PoseSample]>, label: String) -> SummaryRow {
    let (errors, s) = match (shared.task, samples) {
        (Task::Pose { problem, .. }, Some(set)) => {
            let s = problem.model.loss_params(x);
            (problem.evaluate(x, set).unwrap_or_else(|_| ErrorSummary::nan()), (s.s_p, s.s_q))
        }
        _ => (ErrorSummary::nan(), (f64::NAN, f64::NAN)),
    };
    SummaryRow {
        dataset: label,
        algorithm: arm.to_string(),
        errors,
        s_p: s.0,
        s_q: s.1,
    }
}

fn val_set(task: &Task) -> Option<&[PoseSample]> {
    match task {
        Task::Pose { val, .. } => Some(val),
        _ => None,
    }
}

fn validation_loss(task: &Task, x: &ParamVector) -> f64 {
    match task {
        Task::Pose { problem, val } => problem.loss_on(x, val).map(|p| p.total).unwrap_or(f64::NAN),
        _ => task.objective().value(x).unwrap_or(f64::NAN),
    }
}

fn all_finite(v: &ParamVector) -> bool {
    v.iter().all(|a| a.is_finite())
}

fn run_arm(shared: &Shared, name: &str, spec: &OptimizerSpec) -> BenchResult<ArmResult> {
    let cfg = shared.cfg;
    let task = shared.task;
    let obj = task.objective();
    let dataset = cfg.problem.dataset.clone();
    let mut opt = make_optimizer(spec, obj.dim())?;
    let ocp_alpha = match spec {
        OptimizerSpec::OcpLs(c) => Some((c.alpha, c.clamp_floor)),
        _ => None,
    };
    let t_max = cfg.run.max_iterations;
    let started = Instant::now();

    let mut x = shared.x0.clone();
    let initial_loss = obj.value(&x)?;
    let mut records = Vec::with_capacity(t_max as usize);
    let mut checkpoints = Vec::new();
    let mut gaps = Vec::new();
    let mut pl_samples = Vec::new();
    let mut a3_violations = 0u64;
    let mut status = ArmStatus::Completed;

    for k in 1..=t_max {
        let batch = &shared.schedule[(k - 1) as usize];
        let (loss, g) = match obj.batch_value_grad(&x, batch) {
            Ok(v) if v.0.is_finite() && all_finite(&v.1) => v,
            Ok(_) => {
                status = ArmStatus::Diverged {
                    at: k,
                    reason: "non-finite loss or gradient".into(),
                };
                break;
            }
            Err(e) => {
                status = ArmStatus::Diverged { at: k, reason: e.to_string() };
                break;
            }
        };
        let gap = task.gap(&x, loss);
        pl_samples.push((gap.unwrap_or(loss), g.norm_sq()));
        if let Some(gap) = gap {
            gaps.push(gap);
        }
        let x_next = match opt.step(&x, &g) {
            Ok(v) if all_finite(&v) => v,
            Ok(_) => {
                status = ArmStatus::Diverged {
                    at: k,
                    reason: "non-finite iterate".into(),
                };
                break;
            }
            Err(e) => {
                status = ArmStatus::Diverged { at: k, reason: e.to_string() };
                break;
            }
        };
        if let (Some((alpha, _)), Some(h)) = (ocp_alpha, opt.curvature()) {
            if !check_a3(h, alpha, k).holds {
                a3_violations += 1;
            }
        }
        let step_norm = x_next.scale_add(-1.0, &x)?.norm();
        x = x_next;
        let val_loss = (k % cfg.run.val_interval == 0 || k == t_max).then(|| validation_loss(task, &x));
        records.push(RunRecord {
            k,
            train_loss: loss,
            val_loss,
            step_norm,
            clamp_hits: opt.clamp_hits(),
            elapsed_s: if cfg.run.record_elapsed {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
        if cfg.run.checkpoints.contains(&k) && k != t_max {
            checkpoints.push((k, summary_for(shared, name, &x, val_set(task), format!("{dataset}@{k}"))));
        }
    }

    let completed = status == ArmStatus::Completed;
    let final_loss = if completed { obj.value(&x).unwrap_or(f64::NAN) } else { f64::NAN };
    let summary = if completed {
        summary_for(shared, name, &x, val_set(task), dataset.clone())
    } else {
        summary_for(shared, name, &x, None, dataset.clone())
    };
    let robustness = shared
        .robustness_sets
        .iter()
        .map(|(level, set)| {
            let label = format!("{dataset}+noise{}", fmt_g(*level));
            summary_for(shared, name, &x, completed.then_some(set.as_slice()), label)
        })
        .collect();

    // Without a known optimum the best observed loss stands in for f*.
    let mu_pl_est = if obj.optimum_value().is_some() {
        mu_pl_from_samples(pl_samples.iter().copied())
    } else {
        let best = pl_samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        mu_pl_from_samples(pl_samples.iter().map(|&(f, g2)| (f - best, g2)))
    }
    .unwrap_or(f64::NAN);
    let rho_pred = ocp_alpha
        .and_then(|(_, floor)| rho_infinity(floor, shared.beta_est, mu_pl_est).ok())
        .unwrap_or(f64::NAN);
    // Fit over the leading run of positive gaps (exact convergence ends it).
    let positive = gaps.iter().take_while(|g| **g > 0.0 && g.is_finite()).count();
    let fit = fit_empirical_rate(&gaps[..positive]).ok();
    let descent_violations = match (task, ocp_alpha) {
        (Task::Quadratic(_), Some((_, floor)))
            if check_rate_preconditions(floor, shared.beta_est, mu_pl_est).is_ok() =>
        {
            Some(monotonicity_violations(&gaps, 1e-12))
        }
        _ => None,
    };

    Ok(ArmResult {
        name: name.to_string(),
        status,
        records,
        checkpoints,
        summary,
        robustness,
        rate: RateReport {
            beta_est: shared.beta_est,
            mu_pl_est,
            rho_pred,
            rho_fit: fit.map_or(f64::NAN, |f| f.rho),
            fit_r2: fit.map_or(f64::NAN, |f| f.r2),
            a3_violation_count: a3_violations,
        },
        initial_loss,
        final_loss,
        clamp_hits: opt.clamp_hits(),
        descent_violations,
        final_x: x,
    })
}

/// Runs all arms. A failing arm is reported as diverged; configuration and
/// problem-construction errors abort the whole experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> BenchResult<ExperimentResult> {
    cfg.validate()?;
    let specs = cfg.optimizer_specs()?;
    let (task, x0) = build_task(cfg)?;
    let obj = task.objective();
    let schedule = batch_schedule(obj.n_samples(), cfg.run.batch_size, cfg.run.max_iterations, cfg.problem.seed);
    let beta_est = match &task {
        Task::Quadratic(q) => q.smoothness(),
        _ => estimate_beta(obj, &x0, 1e-3, cfg.run.beta_pairs.max(1), derive_seed(cfg.problem.seed, stream::BETA))?,
    };
    let robustness_sets = match &task {
        Task::Pose { val, .. } => cfg
            .robustness
            .noise_levels
            .iter()
            .enumerate()
            .map(|(i, &level)| {
                let seed = derive_seed(cfg.problem.seed, stream::ROBUSTNESS + i as u64);
                (level, perturb_features(val, level, seed))
            })
            .collect(),
        _ => cfg.robustness.noise_levels.iter().map(|&l| (l, Vec::new())).collect(),
    };
    let shared = Shared {
        cfg,
        task: &task,
        x0: &x0,
        schedule: &schedule,
        beta_est,
        robustness_sets,
    };

    let run = |name: &str, spec: &OptimizerSpec| {
        run_arm(&shared, name, spec).unwrap_or_else(|e| failed_arm(&shared, name, e))
    };
    let arms: Vec<ArmResult> = if cfg.run.parallel && specs.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = specs
                .iter()
                .map(|(name, spec)| {
                    let run = &run;
                    scope.spawn(move || run(name, spec))
                })
                .collect();
            handles
                .into_iter()
                .zip(&specs)
                .map(|(h, (name, _))| {
                    h.join()
                        .unwrap_or_else(|_| failed_arm(&shared, name, BenchError::Core(ocpls_core::Error::Contract("arm thread panicked".into()))))
                })
                .collect()
        })
    } else {
        specs.iter().map(|(name, spec)| run(name, spec)).collect()
    };

    Ok(ExperimentResult {
        name: cfg.name.clone(),
        dataset: cfg.problem.dataset.clone(),
        arms,
    })
}

fn failed_arm(shared: &Shared, name: &str, err: BenchError) -> ArmResult {
    let dataset = shared.cfg.problem.dataset.clone();
    ArmResult {
        name: name.to_string(),
        status: ArmStatus::Diverged {
            at: 0,
            reason: err.to_string(),
        },
        records: Vec::new(),
        checkpoints: Vec::new(),
        summary: summary_for(shared, name, shared.x0, None, dataset.clone()),
        robustness: shared
            .robustness_sets
            .iter()
            .map(|(l, _)| summary_for(shared, name, shared.x0, None, format!("{dataset}+noise{}", fmt_g(*l))))
            .collect(),
        rate: RateReport {
            beta_est: shared.beta_est,
            mu_pl_est: f64::NAN,
            rho_pred: f64::NAN,
            rho_fit: f64::NAN,
            fit_r2: f64::NAN,
            a3_violation_count: 0,
        },
        initial_loss: f64::NAN,
        final_loss: f64::NAN,
        clamp_hits: 0,
        descent_violations: None,
        final_x: shared.x0.clone(),
    }
}

/// File-name-safe form of an arm name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub const REPORT_HEADER: [&str; 14] = [
    "algorithm",
    "status",
    "iterations",
    "initial_loss",
    "final_loss",
    "clamp_hits",
    "beta_est",
    "mu_pl_est",
    "rho_pred",
    "rho_fit",
    "fit_r2",
    "a3_violation_count",
    "descent_violations",
    "note",
];

/// Writes every output file into `out_dir` and returns their paths.
///
/// Layout: `records_<arm>.csv` per arm, `summary.csv` (final iterate),
/// `summary_k<k>.csv` per checkpoint, `robustness.csv`, `report.csv`, and
/// `curves.csv` / `curves.svg`. Arms write nothing concurrently; all files are
/// produced here after the run.
pub fn write_outputs(result: &ExperimentResult, cfg: &ExperimentConfig, out_dir: &Path) -> BenchResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    for arm in &result.arms {
        let path = out_dir.join(format!("records_{}.csv", file_stem(&arm.name)));
        write_records(&arm.records, &path)?;
        written.push(path);
    }

    let summary_path = out_dir.join("summary.csv");
    let rows: Vec<SummaryRow> = result.arms.iter().map(|a| a.summary.clone()).collect();
    write_summary(&rows, &summary_path)?;
    written.push(summary_path);

    for &k in &cfg.run.checkpoints {
        if k >= cfg.run.max_iterations {
            continue;
        }
        let rows: Vec<SummaryRow> = result
            .arms
            .iter()
            .map(|a| {
                a.checkpoints
                    .iter()
                    .find(|(ck, _)| *ck == k)
                    .map(|(_, r)| r.clone())
                    .unwrap_or_else(|| SummaryRow {
                        dataset: format!("{}@{k}", result.dataset),
                        algorithm: a.name.clone(),
                        errors: ErrorSummary::nan(),
                        s_p: f64::NAN,
                        s_q: f64::NAN,
                    })
            })
            .collect();
        let path = out_dir.join(format!("summary_k{k}.csv"));
        write_summary(&rows, &path)?;
        written.push(path);
    }

    let robust_path = out_dir.join("robustness.csv");
    let rows: Vec<SummaryRow> = result.arms.iter().flat_map(|a| a.robustness.iter().cloned()).collect();
    write_summary(&rows, &robust_path)?;
    written.push(robust_path);

    let report_path = out_dir.join("report.csv");
    let report_rows = result.arms.iter().map(|a| {
        let r = &a.rate;
        vec![
            a.name.clone(),
            a.status.label().to_string(),
            a.records.len().to_string(),
            fmt_g(a.initial_loss),
            fmt_g(a.final_loss),
            a.clamp_hits.to_string(),
            fmt_g(r.beta_est),
            fmt_g(r.mu_pl_est),
            fmt_g(r.rho_pred),
            fmt_g(r.rho_fit),
            fmt_g(r.fit_r2),
            r.a3_violation_count.to_string(),
            a.descent_violations.map(|v| v.to_string()).unwrap_or_default(),
            match &a.status {
                ArmStatus::Completed => String::new(),
                ArmStatus::Diverged { at, reason } => format!("step {at}: {reason}"),
            },
        ]
    });
    write_rows(&report_path, &REPORT_HEADER, report_rows)?;
    written.push(report_path);

    let series: Vec<(&str, &[RunRecord])> = result.arms.iter().map(|a| (a.name.as_str(), a.records.as_slice())).collect();
    written.extend(crate::curves::emit_curves(&series, out_dir)?);
    Ok(written)
}
