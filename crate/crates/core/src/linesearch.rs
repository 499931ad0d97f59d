//! Two-step sweep over the cost weight `w_J` of the composite PINN loss.
//!
//! The cost weight trades PDE feasibility against the control objective: tiny
//! values leave the control untouched, huge values sacrifice the state
//! equations to chase the cost. Neither extreme yields a usable control, and
//! the training losses alone cannot rank intermediate candidates because each
//! candidate is scored against a differently-weighted objective. The sweep
//! resolves this in two steps:
//!
//! 1. **Sweep** ([`step1_sweep`]): train one control/state network pair per
//!    grid value of `w_J` (fresh network seeds per candidate, identical
//!    collocation points), recording the final feasibility loss
//!    `L_FBI = w_r·L_r + w_b·L_b + w_0·L_0` and cost loss `L_J` of each run.
//! 2. **Re-evaluate** ([`step2_evaluate`]): freeze each candidate's sampled
//!    control, train a fresh state network against the feasibility loss only,
//!    and read the cost objective off that re-solve. The candidate with the
//!    smallest re-evaluated cost wins (ties break toward the smaller `w_J`,
//!    which kept the PDE residual more honest).
//!
//! [`cross_validate`] then re-solves every candidate control with the
//! classical high-fidelity solver so the network-quadrature cost can be
//! compared against a trusted number, and [`run_line_search`] chains all
//! three stages.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::pinn::{
    pinn_cost_estimate, sample_control_net, train_control, train_forward, TrainConfig,
};
use crate::problems::{ControlField, ProblemSpec};
use crate::sampling::{generate, SamplingPlan};
use crate::solvers::{evaluate_cost_hifi, HifiSettings};

/// Settings for one full sweep: the `w_J` grid, the training templates for
/// both steps, and the solver settings used for cross-validation.
#[derive(Clone, Debug)]
pub struct LineSearchConfig {
    /// Candidate cost weights, strictly increasing, all positive.
    pub grid: Vec<f64>,
    /// Template for the step-1 control trainings. Per-candidate runs clone
    /// this and offset every seed so the networks start fresh each time.
    pub ctl: TrainConfig,
    /// Template for the step-2 re-evaluation trainings (state network only,
    /// control frozen). Usually the forward-problem architecture and budget.
    pub fwd: TrainConfig,
    /// Collocation plan shared by every run, so candidates differ only in
    /// `w_J` and network initialization.
    pub plan: SamplingPlan,
    /// High-fidelity solver settings for cross-validation.
    pub settings: HifiSettings,
    /// Grid resolution used when sampling each trained control network into a
    /// [`ControlField`].
    pub control_samples: usize,
    /// Feasibility yardstick: candidates whose final `L_FBI` exceeds ten
    /// times this value are flagged (but still evaluated). `None` uses the
    /// best `L_FBI` across the sweep itself.
    pub feasibility_reference: Option<f64>,
    /// When set, each candidate's networks are checkpointed under
    /// `<out_dir>/cand_<index>/`.
    pub out_dir: Option<PathBuf>,
}

/// Everything recorded about one grid point of the sweep.
#[derive(Clone, Debug)]
pub struct CandidateOutcome {
    /// The cost weight this candidate was trained with.
    pub w_j: f64,
    /// Seeds used for its step-1 training (state init, control init, shuffle).
    pub seeds: [u64; 3],
    /// Final feasibility loss `w_r·L_r + w_b·L_b + w_0·L_0` of step 1.
    pub fbi_loss: f64,
    /// Final raw cost loss `L_J` of step 1.
    pub cost_loss: f64,
    /// The trained control network sampled onto a grid.
    pub control: Option<ControlField>,
    /// Checkpoint directory of this candidate's networks, when written.
    pub checkpoint: Option<PathBuf>,
    /// Cost of the step-2 re-solve (network quadrature).
    pub pinn_j: Option<f64>,
    /// Cost of the high-fidelity re-solve of the same control.
    pub hifi_j: Option<f64>,
    /// Cleared when the final `L_FBI` exceeds 10× the feasibility reference.
    pub feasible: bool,
    /// Failure description when either training stage broke down; failed
    /// candidates are excluded from selection.
    pub error: Option<String>,
    /// Wall-clock seconds spent in step 1 / step 2 for this candidate.
    pub train_secs: [f64; 2],
}

/// Result of a completed sweep.
#[derive(Clone, Debug)]
pub struct LineSearchResult {
    /// One outcome per grid value, in grid order.
    pub candidates: Vec<CandidateOutcome>,
    /// Index of the selected candidate: the valid candidate with the smallest
    /// step-2 cost, ties broken toward the smaller `w_J`. `None` when no
    /// candidate survived both steps.
    pub selected: Option<usize>,
    /// High-fidelity cost of the zero control, for scale.
    pub baseline_hifi: Option<f64>,
}

impl LineSearchResult {
    /// The selected candidate, if any.
    pub fn selected_candidate(&self) -> Option<&CandidateOutcome> {
        self.selected.map(|i| &self.candidates[i])
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArg("cost-weight grid is empty".into()));
    }
    for pair in grid.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::InvalidArg(format!(
                "cost-weight grid must be strictly increasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if grid[0] <= 0.0 || !grid.iter().all(|w| w.is_finite()) {
        return Err(Error::InvalidArg(
            "cost-weight grid values must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// Copies a training template with every seed offset by a per-candidate,
/// per-stage constant, so no two runs of the sweep share initialization or
/// shuffling streams.
fn offset_seeds(base: &TrainConfig, candidate: usize, stage: u64) -> TrainConfig {
    let k = (candidate as u64 + 1).wrapping_mul(7919).wrapping_add(stage.wrapping_mul(104_729));
    let mut cfg = base.clone();
    cfg.seed_init_u = base.seed_init_u.wrapping_add(k);
    cfg.seed_init_c = base.seed_init_c.wrapping_add(k);
    cfg.seed_shuffle = base.seed_shuffle.wrapping_add(k);
    cfg
}

/// Weighted feasibility part of a final epoch record.
fn fbi_of(cfg: &TrainConfig, rec: &crate::pinn::EpochRecord) -> f64 {
    cfg.weights.w_r * rec.l_residual
        + cfg.weights.w_b * rec.l_boundary
        + cfg.weights.w_0 * rec.l_initial
}

/// Trains one control network per grid value and records its final losses and
/// sampled control. Individual failures are recorded on the candidate rather
/// than aborting the sweep; only a sweep with no surviving candidate errors.
pub fn step1_sweep(problem: &ProblemSpec, cfg: &LineSearchConfig) -> Result<Vec<CandidateOutcome>> {
    validate_grid(&cfg.grid)?;
    if problem.control.is_none() {
        return Err(Error::InvalidArg(format!(
            "'{}' has no control to sweep over",
            problem.name
        )));
    }
    let mut out = Vec::with_capacity(cfg.grid.len());
    for (i, &w_j) in cfg.grid.iter().enumerate() {
        let mut run_cfg = offset_seeds(&cfg.ctl, i, 0);
        let cand_dir = cfg.out_dir.as_ref().map(|d| d.join(format!("cand_{i:02}")));
        run_cfg.out_dir = cand_dir.clone();
        let seeds = [
            run_cfg.seed_init_u,
            run_cfg.seed_init_c,
            run_cfg.seed_shuffle,
        ];
        let t0 = std::time::Instant::now();
        let mut cand = CandidateOutcome {
            w_j,
            seeds,
            fbi_loss: f64::NAN,
            cost_loss: f64::NAN,
            control: None,
            checkpoint: cand_dir,
            pinn_j: None,
            hifi_j: None,
            feasible: true,
            error: None,
            train_secs: [0.0, 0.0],
        };
        match train_control(problem, &run_cfg, &cfg.plan, w_j) {
            Ok((_, c_net, history)) => {
                let last = history
                    .final_record()
                    .expect("a finished training has at least one epoch record");
                cand.fbi_loss = fbi_of(&run_cfg, last);
                cand.cost_loss = last.l_cost;
                match sample_control_net(problem, &c_net, cfg.control_samples) {
                    Ok(field) => cand.control = Some(field),
                    Err(e) => cand.error = Some(format!("control sampling failed: {e}")),
                }
            }
            Err(e) => cand.error = Some(format!("control training failed: {e}")),
        }
        cand.train_secs[0] = t0.elapsed().as_secs_f64();
        out.push(cand);
    }
    if out.iter().all(|c| c.error.is_some()) {
        return Err(Error::Solver(format!(
            "every candidate of the {}-point cost-weight sweep failed; first failure: {}",
            cfg.grid.len(),
            out[0].error.as_deref().unwrap_or("unknown")
        )));
    }
    let reference = cfg.feasibility_reference.unwrap_or_else(|| {
        out.iter()
            .filter(|c| c.error.is_none() && c.fbi_loss.is_finite())
            .map(|c| c.fbi_loss)
            .fold(f64::INFINITY, f64::min)
    });
    for cand in &mut out {
        cand.feasible = !(cand.fbi_loss.is_finite() && cand.fbi_loss > 10.0 * reference);
    }
    Ok(out)
}

/// Index of the valid candidate with the smallest step-2 cost; ties keep the
/// earlier (smaller-`w_J`) candidate.
fn select_index(candidates: &[CandidateOutcome]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.error.is_some() {
            continue;
        }
        let Some(j) = c.pinn_j else { continue };
        if !j.is_finite() {
            continue;
        }
        match best {
            Some((_, jb)) if j >= jb => {}
            _ => best = Some((i, j)),
        }
    }
    best.map(|(i, _)| i)
}

/// Re-evaluates every surviving candidate: trains a fresh state network with
/// that candidate's control frozen, reads the cost objective off the re-solve,
/// and selects the minimizer.
pub fn step2_evaluate(
    problem: &ProblemSpec,
    cfg: &LineSearchConfig,
    mut candidates: Vec<CandidateOutcome>,
) -> Result<LineSearchResult> {
    let pts = generate(&cfg.plan)?;
    for (i, cand) in candidates.iter_mut().enumerate() {
        if cand.error.is_some() {
            continue;
        }
        let Some(control) = cand.control.clone() else {
            cand.error = Some("candidate carries no sampled control".into());
            continue;
        };
        let mut run_cfg = offset_seeds(&cfg.fwd, i, 1);
        run_cfg.out_dir = cand.checkpoint.as_ref().map(|d| d.join("reeval"));
        let t0 = std::time::Instant::now();
        match train_forward(problem, &run_cfg, &cfg.plan, Some(&control)) {
            Ok((u_net, _)) => match pinn_cost_estimate(problem, &u_net, Some(&control), &pts) {
                Ok(j) => cand.pinn_j = Some(j),
                Err(e) => cand.error = Some(format!("cost estimate failed: {e}")),
            },
            Err(e) => cand.error = Some(format!("re-evaluation training failed: {e}")),
        }
        cand.train_secs[1] = t0.elapsed().as_secs_f64();
    }
    let selected = select_index(&candidates);
    Ok(LineSearchResult {
        candidates,
        selected,
        baseline_hifi: None,
    })
}

/// Re-solves every candidate control with the classical high-fidelity solver
/// and stores the resulting costs next to the network-quadrature ones. Also
/// evaluates the zero control for scale.
pub fn cross_validate(
    problem: &ProblemSpec,
    cfg: &LineSearchConfig,
    result: &mut LineSearchResult,
) -> Result<()> {
    result.baseline_hifi = Some(evaluate_cost_hifi(problem, None, &cfg.settings)?);
    for cand in &mut result.candidates {
        if let Some(control) = &cand.control {
            cand.hifi_j = Some(evaluate_cost_hifi(problem, Some(control), &cfg.settings)?);
        }
    }
    Ok(())
}

/// Full pipeline: sweep, re-evaluate, cross-validate.
pub fn run_line_search(problem: &ProblemSpec, cfg: &LineSearchConfig) -> Result<LineSearchResult> {
    let candidates = step1_sweep(problem, cfg)?;
    let mut result = step2_evaluate(problem, cfg, candidates)?;
    cross_validate(problem, cfg, &mut result)?;
    Ok(result)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.10e}"),
        _ => "nan".into(),
    }
}

/// Writes the sweep as CSV with columns
/// `w_J,L_FBI,L_J,J_pinn_eval,J_hifi,selected` (one row per grid value).
pub fn export_line_search_csv(result: &LineSearchResult, path: &std::path::Path) -> Result<()> {
    let mut s = String::from("w_J,L_FBI,L_J,J_pinn_eval,J_hifi,selected\n");
    for (i, c) in result.candidates.iter().enumerate() {
        s.push_str(&format!(
            "{:.10e},{},{},{},{},{}\n",
            c.w_j,
            fmt_opt(Some(c.fbi_loss)),
            fmt_opt(Some(c.cost_loss)),
            fmt_opt(c.pinn_j),
            fmt_opt(c.hifi_j),
            usize::from(result.selected == Some(i)),
        ));
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{burgers_control, ControlKind};

    fn dummy_candidate(w_j: f64, pinn_j: Option<f64>, error: Option<&str>) -> CandidateOutcome {
        CandidateOutcome {
            w_j,
            seeds: [0, 0, 0],
            fbi_loss: 1.0,
            cost_loss: 1.0,
            control: None,
            checkpoint: None,
            pinn_j,
            hifi_j: None,
            feasible: true,
            error: error.map(String::from),
            train_secs: [0.0, 0.0],
        }
    }

    /// Tiny configuration so the end-to-end tests stay fast.
    fn tiny_config(problem: &ProblemSpec, grid: Vec<f64>, epochs: usize) -> LineSearchConfig {
        let mut ctl = TrainConfig::defaults_for(problem);
        ctl.epochs = epochs;
        ctl.lr_schedule = vec![(0, 1e-3)];
        let mut fwd = ctl.clone();
        fwd.epochs = epochs / 2;
        let mut plan = problem.default_sampling(7);
        plan.n_r = 400;
        plan.m = 2;
        LineSearchConfig {
            grid,
            ctl,
            fwd,
            plan,
            settings: HifiSettings::default(),
            control_samples: 64,
            feasibility_reference: None,
            out_dir: None,
        }
    }

    #[test]
    fn selection_takes_the_smallest_evaluated_cost_with_ties_toward_smaller_weight() {
        let cands = vec![
            dummy_candidate(1e-3, Some(5.0), None),
            dummy_candidate(1e-1, Some(2.0), None),
            dummy_candidate(1.0, Some(2.0), None),
            dummy_candidate(1e1, None, Some("broken")),
            dummy_candidate(1e3, Some(7.0), None),
        ];
        assert_eq!(select_index(&cands), Some(1));
        let none: Vec<CandidateOutcome> = vec![
            dummy_candidate(1.0, None, Some("broken")),
            dummy_candidate(2.0, Some(f64::NAN), None),
        ];
        assert_eq!(select_index(&none), None);
    }

    #[test]
    fn grid_validation_rejects_empty_unsorted_and_nonpositive_grids() {
        let p = burgers_control();
        let cfg = tiny_config(&p, vec![], 1);
        assert!(step1_sweep(&p, &cfg).is_err());
        for bad in [vec![1.0, 0.5], vec![0.0, 1.0], vec![-1.0, 1.0], vec![1.0, 1.0]] {
            let cfg = tiny_config(&p, bad, 1);
            assert!(step1_sweep(&p, &cfg).is_err());
        }
    }

    #[test]
    fn sweep_refuses_problems_without_a_control() {
        let p = crate::problems::laplace_forward();
        let cfg = tiny_config(&burgers_control(), vec![1.0], 1);
        let err = step1_sweep(&p, &cfg).unwrap_err();
        assert!(err.to_string().contains("no control"));
    }

    #[test]
    fn pipeline_populates_every_candidate_and_selects_one() {
        let p = burgers_control();
        let cfg = tiny_config(&p, vec![1e-3, 1.0], 30);
        let result = run_line_search(&p, &cfg).unwrap();
        assert_eq!(result.candidates.len(), 2);
        for cand in &result.candidates {
            assert!(cand.error.is_none(), "candidate failed: {:?}", cand.error);
            assert!(cand.fbi_loss.is_finite() && cand.fbi_loss > 0.0);
            assert!(cand.cost_loss.is_finite() && cand.cost_loss > 0.0);
            assert!(cand.pinn_j.expect("step-2 cost").is_finite());
            assert!(cand.hifi_j.expect("hifi cost").is_finite());
            let field = cand.control.as_ref().expect("sampled control");
            assert_eq!(field.kind, ControlKind::InitialCondition);
            assert_eq!(field.values.len(), 64);
        }
        let baseline = result.baseline_hifi.expect("baseline cost");
        assert!(baseline > 0.0);
        assert!(result.selected.is_some());
        // Candidate seeds must differ between grid points.
        assert_ne!(result.candidates[0].seeds, result.candidates[1].seeds);
    }

    #[test]
    fn pipeline_is_deterministic_for_fixed_seeds() {
        let p = burgers_control();
        let cfg = tiny_config(&p, vec![1e-2, 1.0], 20);
        let a = run_line_search(&p, &cfg).unwrap();
        let b = run_line_search(&p, &cfg).unwrap();
        assert_eq!(a.selected, b.selected);
        for (ca, cb) in a.candidates.iter().zip(&b.candidates) {
            assert_eq!(ca.fbi_loss.to_bits(), cb.fbi_loss.to_bits());
            assert_eq!(ca.cost_loss.to_bits(), cb.cost_loss.to_bits());
            assert_eq!(
                ca.pinn_j.unwrap().to_bits(),
                cb.pinn_j.unwrap().to_bits(),
                "step-2 cost must be reproducible"
            );
        }
    }

    #[test]
    fn csv_export_writes_one_row_per_candidate_and_marks_the_selection() {
        let result = LineSearchResult {
            candidates: vec![
                dummy_candidate(1e-2, Some(3.0), None),
                dummy_candidate(1.0, Some(1.0), None),
            ],
            selected: Some(1),
            baseline_hifi: Some(9.0),
        };
        let dir = std::env::temp_dir().join("pdeopt_ls_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sweep.csv");
        export_line_search_csv(&result, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "w_J,L_FBI,L_J,J_pinn_eval,J_hifi,selected");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",0"));
        assert!(lines[2].ends_with(",1"));
        assert!(lines[1].contains("nan"), "missing hifi J prints as nan");
    }
}
