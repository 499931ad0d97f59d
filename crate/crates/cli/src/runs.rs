//! Run orchestration: turns a resolved configuration into engine calls and
//! persists every artifact — manifest, loss histories, checkpoints, control
//! fields in the interchange format, and a `summary.txt` of final numbers.

use std::path::{Path, PathBuf};

use pdeopt_core::adjoint::{dal_optimize, fd_gradient_check, DalConfig};
use pdeopt_core::error::Error as CoreError;
use pdeopt_core::linesearch::{
    export_line_search_csv, run_line_search, LineSearchConfig,
};
use pdeopt_core::pinn::{
    pinn_cost_estimate, relative_l2_error, sample_control_net, train_control, train_forward,
    LossWeights, TrainConfig, TrainHistory,
};
use pdeopt_core::problems::{
    burgers_analytical, laplace_forward_solution, ProblemId, ProblemSpec,
};
use pdeopt_core::sampling::{generate, SamplingPlan};
use pdeopt_core::solvers::{evaluate_cost_hifi, HifiSettings};

use crate::config::{
    subsystem_seed, Engine, ResolvedConfig, SEED_CHECK, SEED_INIT_C, SEED_INIT_U, SEED_SAMPLING,
    SEED_SHUFFLE,
};
use crate::controlio;
use crate::CliError;

/// Maps a problem name to its specification.
pub fn problem_by_name(name: &str) -> Result<ProblemSpec, CliError> {
    use pdeopt_core::problems as p;
    match name {
        "laplace-fwd" => Ok(p::laplace_forward()),
        "laplace-ctl" => Ok(p::laplace_control()),
        "burgers-fwd" => Ok(p::burgers()),
        "burgers-ctl" => Ok(p::burgers_control()),
        "ks-fwd" => Ok(p::ks()),
        "ks-ctl" => Ok(p::ks_control()),
        other => Err(CliError::Usage(format!(
            "unknown problem '{other}' (expected laplace-fwd, laplace-ctl, burgers-fwd, \
             burgers-ctl, ks-fwd, or ks-ctl)"
        ))),
    }
}

/// Classifies a core error for the machine-readable failure record.
fn error_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::InvalidArg(_) => "invalid-argument",
        CoreError::NonFinite(_) => "non-finite",
        CoreError::Solver(_) => "solver",
        CoreError::Parse(_) => "parse",
        CoreError::Io(_) => "io",
    }
}

fn run_err(e: CoreError) -> CliError {
    CliError::Run(format!("[{}] {e}", error_kind(&e)))
}

/// A prepared run: problem, resolved configuration, and output directory
/// (created, manifest already written).
pub struct RunContext {
    pub problem: ProblemSpec,
    pub cfg: ResolvedConfig,
    pub out: PathBuf,
}

/// Resolves configuration layers, creates the output directory, and writes
/// the manifest.
pub fn prepare(
    engine: Engine,
    problem_flag: Option<&str>,
    config_path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RunContext, CliError> {
    let name = match problem_flag {
        Some(n) => n.to_string(),
        None => scan_config_key(config_path, "run.problem")?.ok_or_else(|| {
            CliError::Usage("no problem selected: pass --problem or a config with run.problem".into())
        })?,
    };
    let problem = problem_by_name(&name)?;
    let mut cfg = ResolvedConfig::defaults(&problem, engine);
    if let Some(path) = config_path {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(overrides)?;
    if cfg.get_usize("run.workers")? == 0 {
        return Err(CliError::Usage("run.workers must be at least 1".into()));
    }
    cfg.get_bool("run.deterministic")?;
    let out = match cfg.get_str("run.out") {
        "" => output_root().join(format!("{}-{}", problem.name, engine.tag())),
        s => PathBuf::from(s),
    };
    cfg.apply_overrides(&[("run.out".into(), out.display().to_string())])?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Usage(format!("cannot create '{}': {e}", out.display())))?;
    std::fs::write(out.join("manifest.txt"), cfg.manifest())
        .map_err(|e| CliError::Run(format!("cannot write manifest: {e}")))?;
    Ok(RunContext {
        problem,
        cfg,
        out,
    })
}

/// Output root: `$PDEOPT_OUT` when set, `./runs` otherwise.
fn output_root() -> PathBuf {
    std::env::var_os("PDEOPT_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Pre-scans a config file for one key so the problem can be known before
/// the full key set is validated.
fn scan_config_key(path: Option<&Path>, key: &str) -> Result<Option<String>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config '{}': {e}", path.display())))?;
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == key {
                return Ok(Some(v.trim().to_string()));
            }
        }
    }
    Ok(None)
}

fn hifi_from(cfg: &ResolvedConfig) -> Result<HifiSettings, CliError> {
    let mut s = HifiSettings::default();
    s.burgers.n = cfg.get_usize("hifi.burgers_n")?;
    s.burgers.dt = cfg.get_f64("hifi.burgers_dt")?;
    s.ks.n = cfg.get_usize("hifi.ks_n")?;
    s.ks.dt = cfg.get_f64("hifi.ks_dt")?;
    s.laplace_n = cfg.get_usize("hifi.laplace_n")?;
    Ok(s)
}

fn plan_from(cfg: &ResolvedConfig, problem: &ProblemSpec, root: u64) -> Result<SamplingPlan, CliError> {
    let mut plan = problem.default_sampling(subsystem_seed(root, SEED_SAMPLING));
    plan.n_r = cfg.get_usize("sampling.n_r")?;
    plan.m = cfg.get_usize("sampling.m")?;
    Ok(plan)
}

fn train_cfg_from(
    ctx: &RunContext,
    root: u64,
    with_artifacts: bool,
) -> Result<TrainConfig, CliError> {
    let cfg = &ctx.cfg;
    let arch_u = cfg
        .get_arch("pinn.arch_u")?
        .ok_or_else(|| CliError::Usage("pinn.arch_u must list layer sizes".into()))?;
    let mut t = TrainConfig::defaults_for(&ctx.problem);
    t.arch_u = arch_u;
    t.arch_c = cfg.get_arch("pinn.arch_c")?;
    t.epochs = cfg.get_usize("pinn.epochs")?;
    t.lr_schedule = cfg.get_schedule("pinn.lr_schedule")?;
    t.weights = LossWeights {
        w_r: cfg.get_f64("pinn.w_r")?,
        w_b: cfg.get_f64("pinn.w_b")?,
        w_0: cfg.get_f64("pinn.w_0")?,
        w_j: 0.0,
    };
    t.checkpoint_every = cfg.get_usize("pinn.checkpoint_every")?;
    t.seed_init_u = subsystem_seed(root, SEED_INIT_U);
    t.seed_init_c = subsystem_seed(root, SEED_INIT_C);
    t.seed_shuffle = subsystem_seed(root, SEED_SHUFFLE);
    if with_artifacts {
        t.out_dir = Some(ctx.out.join("checkpoints"));
        t.history_csv = Some(ctx.out.join("history.csv"));
    } else {
        t.out_dir = None;
        t.history_csv = None;
    }
    Ok(t)
}

/// Writes `summary.txt`: `key = value` lines, floats at 17 significant
/// digits so equal numbers imply equal text.
fn write_summary(out: &Path, rows: &[(&str, String)]) -> Result<(), CliError> {
    let mut s = String::new();
    for (k, v) in rows {
        s.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(out.join("summary.txt"), s)
        .map_err(|e| CliError::Run(format!("cannot write summary: {e}")))
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

fn history_rows(h: &TrainHistory) -> Vec<(&'static str, String)> {
    let last = h.records.last();
    vec![
        ("epochs", last.map_or(0, |r| r.epoch + 1).to_string()),
        ("final_residual_loss", f(last.map_or(f64::NAN, |r| r.l_residual))),
        ("final_boundary_loss", f(last.map_or(f64::NAN, |r| r.l_boundary))),
        ("final_initial_loss", f(last.map_or(f64::NAN, |r| r.l_initial))),
        ("final_cost_loss", f(last.map_or(f64::NAN, |r| r.l_cost))),
        ("final_total_loss", f(last.map_or(f64::NAN, |r| r.total))),
        ("wall_secs", format!("{:.3}", h.wall_secs)),
    ]
}

/// `forward`: trains a state network; control problems need a frozen control.
pub fn run_forward(ctx: &RunContext) -> Result<(), CliError> {
    let root = ctx.cfg.get_u64("run.seed")?;
    let tc = train_cfg_from(ctx, root, true)?;
    let plan = plan_from(&ctx.cfg, &ctx.problem, root)?;
    let hifi = hifi_from(&ctx.cfg)?;
    let frozen = match ctx.cfg.get_str("forward.control") {
        "" => None,
        path => Some(controlio::read_control(Path::new(path))?),
    };
    if ctx.problem.control.is_some() && frozen.is_none() {
        return Err(CliError::Usage(format!(
            "'{}' is a control problem: forward runs need --control <file> (key forward.control)",
            ctx.problem.name
        )));
    }
    let (u, hist) = train_forward(&ctx.problem, &tc, &plan, frozen.as_ref()).map_err(run_err)?;
    let mut rows = history_rows(&hist);
    match ctx.problem.id {
        ProblemId::LaplaceFwd => {
            let err = relative_l2_error(
                &u,
                laplace_forward_solution,
                ctx.problem.lo,
                ctx.problem.hi,
                100,
            );
            rows.push(("rel_l2_vs_reference", f(err)));
        }
        ProblemId::BurgersFwd => {
            let err = relative_l2_error(&u, burgers_analytical, ctx.problem.lo, ctx.problem.hi, 100);
            rows.push(("rel_l2_vs_reference", f(err)));
        }
        _ => {}
    }
    if let Some(field) = &frozen {
        let pts = generate(&plan).map_err(run_err)?;
        let j_pinn = pinn_cost_estimate(&ctx.problem, &u, Some(field), &pts).map_err(run_err)?;
        let j_hifi = evaluate_cost_hifi(&ctx.problem, Some(field), &hifi).map_err(run_err)?;
        rows.push(("j_pinn", f(j_pinn)));
        rows.push(("j_hifi", f(j_hifi)));
    }
    write_summary(&ctx.out, &rows)
}

/// `control`: concurrent state/control training at a fixed cost weight.
pub fn run_control(ctx: &RunContext) -> Result<(), CliError> {
    let root = ctx.cfg.get_u64("run.seed")?;
    let tc = train_cfg_from(ctx, root, true)?;
    let plan = plan_from(&ctx.cfg, &ctx.problem, root)?;
    let hifi = hifi_from(&ctx.cfg)?;
    let w_j = ctx.cfg.get_f64("pinn.w_j")?;
    let samples = ctx.cfg.get_usize("pinn.control_samples")?;
    let (u, c, hist) = train_control(&ctx.problem, &tc, &plan, w_j).map_err(run_err)?;
    let field = sample_control_net(&ctx.problem, &c, samples).map_err(run_err)?;
    controlio::write_control(&field, &ctx.out.join("control.txt"))?;
    let pts = generate(&plan).map_err(run_err)?;
    let j_pinn = pinn_cost_estimate(&ctx.problem, &u, Some(&field), &pts).map_err(run_err)?;
    let j_hifi = evaluate_cost_hifi(&ctx.problem, Some(&field), &hifi).map_err(run_err)?;
    let baseline = evaluate_cost_hifi(&ctx.problem, None, &hifi).map_err(run_err)?;
    let mut rows = history_rows(&hist);
    rows.push(("w_j", super::config::trim_float(w_j)));
    rows.push(("j_pinn", f(j_pinn)));
    rows.push(("j_hifi", f(j_hifi)));
    rows.push(("baseline_hifi", f(baseline)));
    write_summary(&ctx.out, &rows)
}

/// `linesearch`: two-step cost-weight sweep with re-evaluation, selection,
/// and high-fidelity cross-validation.
pub fn run_linesearch(ctx: &RunContext) -> Result<(), CliError> {
    let root = ctx.cfg.get_u64("run.seed")?;
    let ctl = train_cfg_from(ctx, root, false)?;
    let mut fwd = ctl.clone();
    fwd.arch_u = ctx
        .cfg
        .get_arch("linesearch.fwd_arch")?
        .ok_or_else(|| CliError::Usage("linesearch.fwd_arch must list layer sizes".into()))?;
    fwd.arch_c = None;
    fwd.epochs = ctx.cfg.get_usize("linesearch.fwd_epochs")?;
    fwd.lr_schedule = ctx.cfg.get_schedule("linesearch.fwd_lr_schedule")?;
    let ls_cfg = LineSearchConfig {
        grid: ctx.cfg.get_f64_list("linesearch.grid")?,
        ctl,
        fwd,
        plan: plan_from(&ctx.cfg, &ctx.problem, root)?,
        settings: hifi_from(&ctx.cfg)?,
        control_samples: ctx.cfg.get_usize("linesearch.samples")?,
        feasibility_reference: None,
        out_dir: Some(ctx.out.join("candidates")),
    };
    let result = run_line_search(&ctx.problem, &ls_cfg).map_err(run_err)?;
    export_line_search_csv(&result, &ctx.out.join("sweep.csv")).map_err(run_err)?;
    let Some(idx) = result.selected else {
        return Err(CliError::Run(
            "[solver] no sweep candidate survived re-evaluation".into(),
        ));
    };
    let selected = &result.candidates[idx];
    if let Some(field) = &selected.control {
        controlio::write_control(field, &ctx.out.join("control.txt"))?;
    }
    let mut rows: Vec<(&str, String)> = vec![
        ("grid_points", result.candidates.len().to_string()),
        ("selected_index", idx.to_string()),
        ("selected_w_j", super::config::trim_float(selected.w_j)),
        ("selected_fbi_loss", f(selected.fbi_loss)),
        ("selected_cost_loss", f(selected.cost_loss)),
    ];
    if let Some(j) = selected.pinn_j {
        rows.push(("selected_j_pinn", f(j)));
    }
    if let Some(j) = selected.hifi_j {
        rows.push(("selected_j_hifi", f(j)));
    }
    if let Some(b) = result.baseline_hifi {
        rows.push(("baseline_hifi", f(b)));
    }
    write_summary(&ctx.out, &rows)
}

/// `dal`: classical adjoint-loop descent.
pub fn run_dal(ctx: &RunContext) -> Result<(), CliError> {
    let mut dal = DalConfig::defaults_for(&ctx.problem).map_err(|e| CliError::Usage(e.to_string()))?;
    dal.beta = ctx.cfg.get_f64("dal.beta")?;
    dal.max_iters = ctx.cfg.get_usize("dal.max_iters")?;
    dal.plateau_tol = ctx.cfg.get_f64("dal.plateau_tol")?;
    dal.plateau_window = ctx.cfg.get_usize("dal.plateau_window")?;
    dal.grad_floor = ctx.cfg.get_f64("dal.grad_floor")?;
    dal.ks_export_stride = ctx.cfg.get_usize("dal.ks_export_stride")?;
    dal.settings = hifi_from(&ctx.cfg)?;
    dal.initial = match ctx.cfg.get_str("dal.initial") {
        "" => None,
        path => Some(controlio::read_control(Path::new(path))?),
    };
    let result = dal_optimize(&ctx.problem, &dal).map_err(run_err)?;
    result
        .export_history_csv(&ctx.out.join("history.csv"))
        .map_err(run_err)?;
    controlio::write_control(&result.control, &ctx.out.join("control.txt"))?;
    let j_hifi =
        evaluate_cost_hifi(&ctx.problem, Some(&result.control), &dal.settings).map_err(run_err)?;
    let baseline = evaluate_cost_hifi(&ctx.problem, None, &dal.settings).map_err(run_err)?;
    let last = result.history.last();
    write_summary(
        &ctx.out,
        &[
            ("iterations", result.history.len().to_string()),
            ("final_cost", f(last.map_or(f64::NAN, |r| r.cost))),
            ("final_grad_norm", f(last.map_or(f64::NAN, |r| r.grad_norm))),
            ("j_hifi", f(j_hifi)),
            ("baseline_hifi", f(baseline)),
        ],
    )
}

/// `evaluate`: high-fidelity cost of a control file (zero control baseline
/// when no file is given).
pub fn run_evaluate(ctx: &RunContext) -> Result<(), CliError> {
    let hifi = hifi_from(&ctx.cfg)?;
    let control = match ctx.cfg.get_str("evaluate.control") {
        "" => None,
        path => Some(controlio::read_control(Path::new(path))?),
    };
    let baseline = evaluate_cost_hifi(&ctx.problem, None, &hifi).map_err(run_err)?;
    let j = match &control {
        Some(c) => evaluate_cost_hifi(&ctx.problem, Some(c), &hifi).map_err(run_err)?,
        None => baseline,
    };
    write_summary(
        &ctx.out,
        &[
            ("j_hifi", f(j)),
            ("baseline_hifi", f(baseline)),
            ("reduction_factor", f(baseline / j)),
        ],
    )
}

/// `check-gradients`: adjoint-vs-finite-difference verification.
pub fn run_check(ctx: &RunContext) -> Result<(), CliError> {
    let root = ctx.cfg.get_u64("run.seed")?;
    let directions = ctx.cfg.get_usize("check.directions")?;
    let eps = ctx.cfg.get_f64("check.eps")?;
    let tol = ctx.cfg.get_f64("check.tol")?;
    let settings = hifi_from(&ctx.cfg)?;
    let report = fd_gradient_check(
        &ctx.problem,
        directions,
        eps,
        subsystem_seed(root, SEED_CHECK),
        &settings,
    )
    .map_err(run_err)?;
    let verdict = if report.max_rel < tol { "pass" } else { "fail" };
    println!(
        "{}: max relative gradient error {:.3e} over {} directions (tolerance {:.1e}) -> {}",
        ctx.problem.name,
        report.max_rel,
        report.entries.len(),
        tol,
        verdict
    );
    write_summary(
        &ctx.out,
        &[
            ("directions", report.entries.len().to_string()),
            ("eps", super::config::trim_float(eps)),
            ("max_rel_error", f(report.max_rel)),
            ("tolerance", super::config::trim_float(tol)),
            ("verdict", verdict.to_string()),
        ],
    )?;
    if verdict == "fail" {
        return Err(CliError::Run(format!(
            "[solver] gradient check failed for '{}': max relative error {:.3e} exceeds {:.1e}",
            ctx.problem.name, report.max_rel, tol
        )));
    }
    Ok(())
}
