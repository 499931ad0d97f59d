//! `pdeopt` — PDE-constrained optimal control from the command line.
//!
//! Two engines solve the same control problems: physics-informed neural
//! networks (trained against a composite residual/boundary/initial/cost
//! loss) and classical adjoint-loop gradient descent on spectral and
//! finite-difference solvers. Every optimized control can be re-solved at
//! high fidelity so the reported cost is a trusted number, not a training
//! metric.

mod config;
mod controlio;
mod export;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Engine;

/// Failure classes mapped to exit codes: usage problems exit 1, runtime
/// (numerical / IO) failures exit 2 and leave a machine-readable
/// `error.txt` in the run directory.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

const KEY_HELP: &str = "\
Configuration is layered: built-in per-problem defaults, then the --config
file, then --set/flag overrides. Files hold flat `section.key = value` lines
('#' comments). Unknown keys are rejected with their line number.

Key sections by engine:
  run.*        seed, out, deterministic, workers          (all engines)
  hifi.*       burgers_n/dt, ks_n/dt, laplace_n           (all engines)
  pinn.*       arch_u, arch_c, epochs, lr_schedule (e:r,...), w_r, w_b, w_0,
               w_j, control_samples, checkpoint_every     (forward/control/linesearch)
  sampling.*   n_r, m                                     (forward/control/linesearch)
  forward.*    control (frozen control file)              (forward)
  linesearch.* grid, samples, fwd_arch, fwd_epochs,
               fwd_lr_schedule                            (linesearch)
  dal.*        beta, max_iters, plateau_tol, plateau_window, grad_floor,
               ks_export_stride, initial                  (dal)
  evaluate.*   control                                    (evaluate)
  check.*      directions, eps, tol                       (check-gradients)

Output root: $PDEOPT_OUT (default ./runs). Every run writes manifest.txt,
summary.txt, and engine artifacts (history.csv, checkpoints/, control.txt).
Re-running `--config <run>/manifest.txt` reproduces the run exactly.";

#[derive(Parser)]
#[command(
    name = "pdeopt",
    version,
    about = "Optimal control of PDEs: PINN and adjoint-loop engines with high-fidelity cross-validation",
    after_long_help = KEY_HELP
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Problem name: laplace-fwd, laplace-ctl, burgers-fwd, burgers-ctl, ks-fwd, ks-ctl
    #[arg(long)]
    problem: Option<String>,

    /// Config file (`key = value` lines) layered over built-in defaults
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (default $PDEOPT_OUT/<problem>-<engine>)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Root seed; every random stream is derived from it
    #[arg(long)]
    seed: Option<u64>,

    /// Generic override, repeatable: --set pinn.epochs=500
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a state network against the governing equations
    Forward {
        #[command(flatten)]
        common: CommonArgs,
        /// Frozen control field (interchange file); required for control problems
        #[arg(long)]
        control: Option<PathBuf>,
        /// Shortcut for --set pinn.epochs=N
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train state and control networks concurrently at a fixed cost weight
    Control {
        #[command(flatten)]
        common: CommonArgs,
        /// Cost weight (shortcut for --set pinn.w_j=W)
        #[arg(long)]
        wj: Option<f64>,
        /// Shortcut for --set pinn.epochs=N
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Sweep the cost weight: train per grid value, re-evaluate, select
    Linesearch {
        #[command(flatten)]
        common: CommonArgs,
        /// Shortcut for --set pinn.epochs=N (step-1 budget)
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Adjoint-loop gradient descent with the classical solvers
    Dal {
        #[command(flatten)]
        common: CommonArgs,
        /// Descent step size (shortcut for --set dal.beta=B)
        #[arg(long)]
        beta: Option<f64>,
        /// Iteration cap (shortcut for --set dal.max_iters=N)
        #[arg(long)]
        iters: Option<usize>,
    },
    /// High-fidelity cost of a control field (baseline when omitted)
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Control field to evaluate (interchange file)
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Emit tidy plot CSVs from a finished run directory
    Export {
        /// Run directory produced by another subcommand
        #[arg(long)]
        run: PathBuf,
        /// Destination (default <run>/export)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify adjoint gradients against finite differences
    CheckGradients {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of random directions (shortcut for --set check.directions=N)
        #[arg(long)]
        directions: Option<usize>,
    },
}

/// Collects the generic and sugar overrides of a subcommand into key=value
/// pairs, applied after the config file.
fn override_pairs(
    common: &CommonArgs,
    sugar: &[(&str, Option<String>)],
) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    if let Some(seed) = common.seed {
        pairs.push(("run.seed".to_string(), seed.to_string()));
    }
    if let Some(out) = &common.out {
        pairs.push(("run.out".to_string(), out.display().to_string()));
    }
    for raw in &common.set {
        let Some((k, v)) = raw.split_once('=') else {
            return Err(CliError::Usage(format!(
                "--set expects KEY=VALUE, got '{raw}'"
            )));
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    for (key, value) in sugar {
        if let Some(v) = value {
            pairs.push((key.to_string(), v.clone()));
        }
    }
    Ok(pairs)
}

fn prepare_and_run(
    engine: Engine,
    common: &CommonArgs,
    sugar: &[(&str, Option<String>)],
    exec: impl FnOnce(&runs::RunContext) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let pairs = override_pairs(common, sugar)?;
    let ctx = runs::prepare(
        engine,
        common.problem.as_deref(),
        common.config.as_deref(),
        &pairs,
    )?;
    let outcome = exec(&ctx);
    if let Err(CliError::Run(msg)) = &outcome {
        // Machine-readable failure record next to the manifest.
        let record = format!("status = failed\nmessage = {msg}\n");
        let _ = std::fs::write(ctx.out.join("error.txt"), record);
    }
    outcome
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Forward {
            common,
            control,
            epochs,
        } => prepare_and_run(
            Engine::Forward,
            &common,
            &[
                (
                    "forward.control",
                    control.map(|p| p.display().to_string()),
                ),
                ("pinn.epochs", epochs.map(|e| e.to_string())),
            ],
            runs::run_forward,
        ),
        Cmd::Control { common, wj, epochs } => prepare_and_run(
            Engine::Control,
            &common,
            &[
                ("pinn.w_j", wj.map(|w| config::trim_float(w))),
                ("pinn.epochs", epochs.map(|e| e.to_string())),
            ],
            runs::run_control,
        ),
        Cmd::Linesearch { common, epochs } => prepare_and_run(
            Engine::LineSearch,
            &common,
            &[("pinn.epochs", epochs.map(|e| e.to_string()))],
            runs::run_linesearch,
        ),
        Cmd::Dal {
            common,
            beta,
            iters,
        } => prepare_and_run(
            Engine::Dal,
            &common,
            &[
                ("dal.beta", beta.map(|b| config::trim_float(b))),
                ("dal.max_iters", iters.map(|i| i.to_string())),
            ],
            runs::run_dal,
        ),
        Cmd::Evaluate { common, control } => prepare_and_run(
            Engine::Evaluate,
            &common,
            &[(
                "evaluate.control",
                control.map(|p| p.display().to_string()),
            )],
            runs::run_evaluate,
        ),
        Cmd::Export { run, out } => export::run_export(&run, out.as_deref()),
        Cmd::CheckGradients { common, directions } => prepare_and_run(
            Engine::CheckGradients,
            &common,
            &[("check.directions", directions.map(|d| d.to_string()))],
            runs::run_check,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are not errors; real parse failures exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
