use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ocpls_bench::config::{load_config, load_scene_spec, OptimizerSpec};
use ocpls_bench::io::{fmt_g, read_records, write_scene};
use ocpls_bench::runner::{build_task, ArmStatus, Task};
use ocpls_bench::{run_experiment, write_outputs, BenchError};
use ocpls_core::problems::make_synthetic_scene;
use ocpls_core::theory::{fit_empirical_rate, rho_infinity};

/// Default output directory when neither `--out-dir` nor the config sets one.
const OUT_DIR_ENV: &str = "OCPLS_OUT_DIR";

#[derive(Parser)]
#[command(name = "ocpls", version, about = "OCP-LS optimizer benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm of an experiment config and write CSV/SVG outputs.
    Run {
        config: PathBuf,
        #[arg(long)]
        max_iterations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Run only the named arm; repeatable.
        #[arg(long = "arm")]
        arms: Vec<String>,
    },
    /// Fit the decay rate of a records file against the config's problem.
    CheckTheory { records: PathBuf, config: PathBuf },
    /// Generate a synthetic scene from a TOML spec and write it as CSV.
    GenData { spec: PathBuf, out: PathBuf },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    AllDiverged,
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            max_iterations,
            seed,
            out_dir,
            arms,
        } => cmd_run(&config, max_iterations, seed, out_dir, &arms),
        Command::CheckTheory { records, config } => cmd_check_theory(&records, &config),
        Command::GenData { spec, out } => cmd_gen_data(&spec, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::AllDiverged) => {
            eprintln!("error: every arm diverged");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(
    path: &Path,
    max_iterations: Option<u64>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    arms: &[String],
) -> Result<(), Failure> {
    let mut cfg = load_config(path)?;
    if let Some(n) = max_iterations {
        cfg.run.max_iterations = n;
    }
    if let Some(s) = seed {
        cfg.problem.seed = s;
    }
    if !arms.is_empty() {
        if let Some(missing) = arms.iter().find(|a| !cfg.arms.iter().any(|c| &c.name == *a)) {
            return Err(Failure::Config(anyhow::anyhow!("no arm named '{missing}' in {}", path.display())));
        }
        cfg.arms.retain(|a| arms.contains(&a.name));
    }
    cfg.validate()?;
    let out_dir = out_dir
        .or_else(|| cfg.run.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));

    let result = run_experiment(&cfg)?;
    write_outputs(&result, &cfg, &out_dir)?;
    for arm in &result.arms {
        match &arm.status {
            ArmStatus::Completed => {
                let errors = &arm.summary.errors;
                let pose = if errors.median_pos.is_nan() {
                    String::new()
                } else {
                    format!("  median {} m / {} deg", fmt_g(errors.median_pos), fmt_g(errors.median_rot))
                };
                println!(
                    "{:<12} completed  loss {} -> {}{pose}",
                    arm.name,
                    fmt_g(arm.initial_loss),
                    fmt_g(arm.final_loss)
                );
            }
            ArmStatus::Diverged { at, reason } => println!("{:<12} diverged at step {at}: {reason}", arm.name),
        }
    }
    println!("outputs in {}", out_dir.display());
    if result.all_diverged() {
        return Err(Failure::AllDiverged);
    }
    Ok(())
}

fn cmd_check_theory(records_path: &Path, config_path: &Path) -> Result<(), Failure> {
    let cfg = load_config(config_path)?;
    let records = read_records(records_path)?;
    let (task, _) = build_task(&cfg)?;
    let f_star = task.objective().optimum_value().ok_or_else(|| {
        Failure::Config(anyhow::anyhow!(
            "problem kind {:?} has no known optimum; rate checks need a quadratic or rosenbrock problem",
            cfg.problem.kind
        ))
    })?;
    let gaps: Vec<f64> = records
        .iter()
        .map(|r| r.train_loss - f_star)
        .take_while(|g| *g > 0.0)
        .collect();
    let fit = fit_empirical_rate(&gaps)
        .with_context(|| format!("fitting {} positive gaps from {}", gaps.len(), records_path.display()))
        .map_err(Failure::Runtime)?;
    println!("points_used  {}", gaps.len());
    println!("rho_fit      {}", fmt_g(fit.rho));
    println!("fit_r2       {}", fmt_g(fit.r2));
    if let Task::Quadratic(q) = &task {
        let (beta, mu) = (q.smoothness(), q.pl_constant());
        println!("beta         {}", fmt_g(beta));
        println!("mu_pl        {}", fmt_g(mu));
        for arm in &cfg.optimizer_specs()? {
            if let OptimizerSpec::OcpLs(c) = &arm.1 {
                match rho_infinity(c.clamp_floor, beta, mu) {
                    Ok(rho) => println!(
                        "rho_pred     {} (arm {}, curvature floor {}) -> {}",
                        fmt_g(rho),
                        arm.0,
                        fmt_g(c.clamp_floor),
                        if fit.rho <= rho + 0.05 { "consistent" } else { "slower than predicted" }
                    ),
                    Err(e) => println!("rho_pred     n/a (arm {}): {e}", arm.0),
                }
            }
        }
    }
    Ok(())
}

fn cmd_gen_data(spec_path: &Path, out: &Path) -> Result<(), Failure> {
    let spec = load_scene_spec(spec_path)?;
    let (train, val) = make_synthetic_scene(&spec)
        .map_err(|e| Failure::Config(anyhow::Error::new(e).context(spec_path.display().to_string())))?;
    write_scene(&train, &val, out)?;
    println!("wrote {} train + {} val samples to {}", train.len(), val.len(), out.display());
    Ok(())
}
