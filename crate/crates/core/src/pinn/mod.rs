//! Physics-informed training: composite loss assembly, Adam epochs, and the
//! forward / optimal-control training loops.
//!
//! The loss is built on the reverse-mode tape so one backward sweep yields
//! parameter gradients of the full composite (residual + boundary + initial
//! (+ cost) terms). Residual points are minibatched per epoch; boundary,
//! initial, and cost sets are small and enter every step in full. In control
//! mode the state and control networks are updated concurrently from the
//! same loss evaluation.

pub mod adam;

pub use adam::AdamState;

use crate::autodiff::tape::{grad_params, seed_inputs, NodeId, Tape};
use crate::error::{Error, Result};
use crate::network::{init_glorot, MlpParams};
use crate::problems::{
    burgers_analytical, ks_initial, laplace_bottom_data, laplace_flux_target,
    laplace_forward_solution, ControlField, ProblemId, ProblemSpec,
};
use crate::sampling::{epoch_minibatches, generate, linspace, SamplingPlan, TrainingPoints};
use ndarray::{Array1, Array2};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

/// Scalar weights of the composite loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub w_r: f64,
    pub w_b: f64,
    pub w_0: f64,
    pub w_j: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_r: 1.0,
            w_b: 1.0,
            w_0: 1.0,
            w_j: 0.0,
        }
    }
}

/// Architecture, budget, seeds, and output plumbing of one training run.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Layer sizes of the state network (input dim first, 1 last).
    pub arch_u: Vec<usize>,
    /// Layer sizes of the control network (control problems only).
    pub arch_c: Option<Vec<usize>>,
    pub epochs: usize,
    /// Piecewise-constant learning rate: (first epoch, α) pairs, ascending,
    /// starting at epoch 0.
    pub lr_schedule: Vec<(usize, f64)>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed_init_u: u64,
    pub seed_init_c: u64,
    pub seed_shuffle: u64,
    pub weights: LossWeights,
    /// Write network checkpoints every this many epochs (0 = final only).
    pub checkpoint_every: usize,
    /// Directory for checkpoints; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    /// Stream per-epoch loss rows to this CSV while training.
    pub history_csv: Option<PathBuf>,
}

impl TrainConfig {
    /// Reference budgets per problem (architectures, epochs, learning-rate
    /// drops). These are the full-strength settings; scale `epochs` down for
    /// quick runs.
    pub fn defaults_for(problem: &ProblemSpec) -> Self {
        let (arch_u, arch_c, epochs, lr_schedule): (Vec<usize>, Option<Vec<usize>>, usize, Vec<(usize, f64)>) =
            match problem.id {
                ProblemId::LaplaceFwd => (
                    vec![2, 50, 50, 50, 50, 1],
                    None,
                    6_000,
                    vec![(0, 1e-3), (3_000, 1e-4)],
                ),
                ProblemId::LaplaceCtl => (
                    vec![2, 50, 50, 50, 50, 1],
                    Some(vec![1, 30, 30, 30, 1]),
                    10_000,
                    vec![(0, 1e-3), (5_000, 1e-4)],
                ),
                ProblemId::BurgersFwd => (
                    vec![2, 50, 50, 50, 50, 1],
                    None,
                    10_000,
                    vec![(0, 1e-3), (5_000, 1e-4)],
                ),
                ProblemId::BurgersCtl => (
                    vec![2, 50, 50, 50, 50, 1],
                    Some(vec![1, 30, 30, 30, 1]),
                    30_000,
                    vec![(0, 1e-3), (20_000, 1e-4), (25_000, 1e-5)],
                ),
                ProblemId::KsFwd => (
                    vec![2, 50, 50, 50, 50, 50, 1],
                    None,
                    30_000,
                    vec![(0, 1e-3), (10_000, 1e-4), (20_000, 1e-5)],
                ),
                ProblemId::KsCtl => (
                    vec![2, 50, 50, 50, 50, 50, 1],
                    Some(vec![2, 50, 50, 50, 50, 50, 1]),
                    30_000,
                    vec![(0, 1e-3), (10_000, 1e-4), (20_000, 1e-5)],
                ),
            };
        TrainConfig {
            arch_u,
            arch_c,
            epochs,
            lr_schedule,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed_init_u: 1,
            seed_init_c: 2,
            seed_shuffle: 3,
            weights: LossWeights::default(),
            checkpoint_every: 0,
            out_dir: None,
            history_csv: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lr_schedule.is_empty() || self.lr_schedule[0].0 != 0 {
            return Err(Error::InvalidArg(
                "learning-rate schedule must start at epoch 0".into(),
            ));
        }
        for w in self.lr_schedule.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidArg(
                    "learning-rate schedule thresholds must be strictly increasing".into(),
                ));
            }
        }
        if self.lr_schedule.iter().any(|&(_, a)| !(a > 0.0)) {
            return Err(Error::InvalidArg("learning rates must be positive".into()));
        }
        let wt = &self.weights;
        if [wt.w_r, wt.w_b, wt.w_0, wt.w_j].iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidArg("loss weights must be nonnegative".into()));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        let mut alpha = self.lr_schedule[0].1;
        for &(e, a) in &self.lr_schedule {
            if epoch >= e {
                alpha = a;
            }
        }
        alpha
    }
}

/// Per-epoch mean of each loss component (raw, unweighted) and the weighted
/// total actually minimized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_residual: f64,
    pub l_boundary: f64,
    pub l_initial: f64,
    pub l_cost: f64,
    pub total: f64,
}

/// Loss trace of one training run.
#[derive(Clone, Debug)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub wall_secs: f64,
}

impl TrainHistory {
    /// Writes `epoch,L_r,L_b,L_0,L_J,total` rows.
    pub fn export_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,L_r,L_b,L_0,L_J,total")?;
        for r in &self.records {
            writeln!(
                f,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.epoch, r.l_residual, r.l_boundary, r.l_initial, r.l_cost, r.total
            )?;
        }
        Ok(())
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Node ids of the assembled loss terms on one tape.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub total: NodeId,
    pub residual: NodeId,
    pub boundary: NodeId,
    pub initial: Option<NodeId>,
    pub cost: Option<NodeId>,
}

/// Values of the loss terms (raw components, weighted total).
#[derive(Clone, Copy, Debug)]
pub struct LossBreakdown {
    pub total: f64,
    pub residual: f64,
    pub boundary: f64,
    pub initial: f64,
    pub cost: f64,
}

impl LossNodes {
    pub fn read(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            total: tape.value(self.total),
            residual: tape.value(self.residual),
            boundary: tape.value(self.boundary),
            initial: self.initial.map_or(0.0, |n| tape.value(n)),
            cost: self.cost.map_or(0.0, |n| tape.value(n)),
        }
    }

    fn check_finite(&self, tape: &Tape) -> Result<()> {
        let named = [
            (Some(self.residual), "residual loss"),
            (Some(self.boundary), "boundary loss"),
            (self.initial, "initial-condition loss"),
            (self.cost, "cost-objective loss"),
        ];
        for (node, name) in named {
            if let Some(n) = node {
                if !tape.value(n).is_finite() {
                    return Err(Error::NonFinite(name.into()));
                }
            }
        }
        Ok(())
    }
}

/// One boundary-set penalty term, precomputed per training run.
enum BoundaryTerm {
    /// Mean-square mismatch against fixed data.
    DirichletData { points: Array2<f64>, data: Array1<f64> },
    /// Mean-square mismatch between the state net and the control net
    /// evaluated at the same locations (control input = first coordinate).
    DirichletControl { points: Array2<f64> },
    /// Paired-point periodic matching of the value and x-derivatives up to
    /// `orders` (inclusive).
    PeriodicPair {
        a: Array2<f64>,
        b: Array2<f64>,
        orders: usize,
    },
}

impl BoundaryTerm {
    fn entries(&self) -> usize {
        match self {
            BoundaryTerm::DirichletData { points, .. } => points.nrows(),
            BoundaryTerm::DirichletControl { points } => points.nrows(),
            BoundaryTerm::PeriodicPair { a, orders, .. } => a.nrows() * (orders + 1),
        }
    }
}

enum InitialTerm {
    Data { points: Array2<f64>, data: Array1<f64> },
    Control { points: Array2<f64> },
}

enum CostTerm {
    /// Mean-square top-wall flux mismatch at fixed points (no ½ factor).
    LaplaceFlux { points: Array2<f64>, target: Array1<f64> },
    /// ½·(L/n)·Σ (u(x_i,T) − target_i)² midpoint quadrature.
    BurgersTerminal {
        points: Array2<f64>,
        target: Array1<f64>,
        factor: f64,
    },
    /// ½·L·T · minibatch mean of (u² + σ·f²).
    KsBatchEnergy { sigma: f64, volume: f64 },
}

/// Everything fixed across the epochs of one run: penalty layouts, data
/// arrays, and entry counts.
struct StaticTerms {
    boundary: Vec<BoundaryTerm>,
    boundary_entries: usize,
    initial: Option<InitialTerm>,
    cost: Option<CostTerm>,
}


fn x_only(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    Array2::from_shape_fn((n, 1), |(i, _)| points[[i, 0]])
}

/// Builds the per-run penalty layout. `frozen` replaces the control network
/// with fixed sampled values (forward evaluation of a given control);
/// `with_control_net` marks terms to be wired against the control network.
fn static_terms(
    problem: &ProblemSpec,
    pts: &TrainingPoints,
    frozen: Option<&ControlField>,
    with_control_net: bool,
    include_cost: bool,
) -> Result<StaticTerms> {
    let mut boundary = Vec::new();
    for g in &pts.boundary {
        match (problem.id, g.label.as_str()) {
            (ProblemId::LaplaceFwd, _) => {
                let data = Array1::from_shape_fn(g.points.nrows(), |i| {
                    laplace_forward_solution(g.points[[i, 0]], g.points[[i, 1]])
                });
                boundary.push(BoundaryTerm::DirichletData {
                    points: g.points.clone(),
                    data,
                });
            }
            (ProblemId::LaplaceCtl, "bottom") => {
                let data = Array1::from_shape_fn(g.points.nrows(), |i| {
                    laplace_bottom_data(g.points[[i, 0]])
                });
                boundary.push(BoundaryTerm::DirichletData {
                    points: g.points.clone(),
                    data,
                });
            }
            (ProblemId::LaplaceCtl, "top") => {
                if let Some(cf) = frozen {
                    let data =
                        Array1::from_shape_fn(g.points.nrows(), |i| cf.eval(g.points[[i, 0]]));
                    boundary.push(BoundaryTerm::DirichletData {
                        points: g.points.clone(),
                        data,
                    });
                } else if with_control_net {
                    boundary.push(BoundaryTerm::DirichletControl {
                        points: g.points.clone(),
                    });
                } else {
                    return Err(Error::InvalidArg(
                        "top-wall control needs a control net or a frozen control".into(),
                    ));
                }
            }
            (ProblemId::LaplaceCtl, "side-a") => {
                let b = pts
                    .boundary
                    .iter()
                    .find(|h| h.label == "side-b")
                    .ok_or_else(|| Error::InvalidArg("missing side-b group".into()))?;
                boundary.push(BoundaryTerm::PeriodicPair {
                    a: g.points.clone(),
                    b: b.points.clone(),
                    orders: 1,
                });
            }
            (ProblemId::LaplaceCtl, "side-b") => {} // consumed with side-a
            (ProblemId::BurgersFwd | ProblemId::BurgersCtl, "periodic-a") => {
                let b = pts
                    .boundary
                    .iter()
                    .find(|h| h.label == "periodic-b")
                    .ok_or_else(|| Error::InvalidArg("missing periodic-b group".into()))?;
                boundary.push(BoundaryTerm::PeriodicPair {
                    a: g.points.clone(),
                    b: b.points.clone(),
                    orders: 1,
                });
            }
            (ProblemId::KsFwd | ProblemId::KsCtl, "periodic-a") => {
                let b = pts
                    .boundary
                    .iter()
                    .find(|h| h.label == "periodic-b")
                    .ok_or_else(|| Error::InvalidArg("missing periodic-b group".into()))?;
                boundary.push(BoundaryTerm::PeriodicPair {
                    a: g.points.clone(),
                    b: b.points.clone(),
                    orders: 3,
                });
            }
            (_, "periodic-b") => {} // consumed with periodic-a
            (id, label) => {
                return Err(Error::InvalidArg(format!(
                    "unexpected boundary group '{label}' for {id:?}"
                )))
            }
        }
    }
    let boundary_entries = boundary.iter().map(BoundaryTerm::entries).sum();

    let initial = if pts.initial.nrows() == 0 {
        None
    } else {
        match problem.id {
            ProblemId::BurgersFwd => Some(InitialTerm::Data {
                data: Array1::from_shape_fn(pts.initial.nrows(), |i| {
                    burgers_analytical(pts.initial[[i, 0]], 0.0)
                }),
                points: pts.initial.clone(),
            }),
            ProblemId::BurgersCtl => {
                if let Some(cf) = frozen {
                    Some(InitialTerm::Data {
                        data: Array1::from_shape_fn(pts.initial.nrows(), |i| {
                            cf.eval(pts.initial[[i, 0]])
                        }),
                        points: pts.initial.clone(),
                    })
                } else if with_control_net {
                    Some(InitialTerm::Control {
                        points: pts.initial.clone(),
                    })
                } else {
                    return Err(Error::InvalidArg(
                        "initial-condition control needs a control net or a frozen control".into(),
                    ));
                }
            }
            ProblemId::KsFwd | ProblemId::KsCtl => Some(InitialTerm::Data {
                data: Array1::from_shape_fn(pts.initial.nrows(), |i| {
                    ks_initial(pts.initial[[i, 0]])
                }),
                points: pts.initial.clone(),
            }),
            _ => None,
        }
    };

    let cost = if !include_cost {
        None
    } else {
        match problem.id {
            ProblemId::LaplaceCtl => Some(CostTerm::LaplaceFlux {
                target: Array1::from_shape_fn(pts.cost.nrows(), |i| {
                    laplace_flux_target(pts.cost[[i, 0]])
                }),
                points: pts.cost.clone(),
            }),
            ProblemId::BurgersCtl => {
                let t_end = problem.hi[1];
                let l = problem.hi[0] - problem.lo[0];
                Some(CostTerm::BurgersTerminal {
                    target: Array1::from_shape_fn(pts.cost.nrows(), |i| {
                        burgers_analytical(pts.cost[[i, 0]], t_end)
                    }),
                    factor: 0.5 * l / pts.cost.nrows() as f64,
                    points: pts.cost.clone(),
                })
            }
            ProblemId::KsCtl => Some(CostTerm::KsBatchEnergy {
                sigma: problem.sigma,
                volume: (problem.hi[0] - problem.lo[0]) * (problem.hi[1] - problem.lo[1]),
            }),
            _ => {
                return Err(Error::InvalidArg(
                    "cost term requested for a non-control problem".into(),
                ))
            }
        }
    };

    Ok(StaticTerms {
        boundary,
        boundary_entries,
        initial,
        cost,
    })
}

/// Evaluates KS forcing values of a frozen control at batch points.
fn frozen_forcing(cf: &ControlField, batch: &Array2<f64>) -> Array1<f64> {
    Array1::from_shape_fn(batch.nrows(), |i| cf.eval_xt(batch[[i, 0]], batch[[i, 1]]))
}

/// Assembles the composite loss for one minibatch on `tape`. The control
/// enters as a second registered network when `c` is given, or as frozen
/// sampled data otherwise.
#[allow(clippy::too_many_arguments)]
fn assemble_loss(
    tape: &mut Tape,
    problem: &ProblemSpec,
    u_set: usize,
    u: &MlpParams,
    c: Option<(usize, &MlpParams)>,
    frozen: Option<&ControlField>,
    batch: &Array2<f64>,
    terms: &StaticTerms,
    weights: &LossWeights,
) -> Result<LossNodes> {
    let m = batch.nrows();
    if m == 0 {
        return Err(Error::InvalidArg("empty residual minibatch".into()));
    }
    let (x_ord, t_ord) = problem.pde_orders();

    // residual term: one jet pass per coordinate direction
    let out_x = {
        let jets = seed_inputs(u, batch, Some(0), x_ord);
        tape.mlp_chain(u_set, u, jets)
    };
    let out_t = {
        let jets = seed_inputs(u, batch, Some(1), t_ord);
        tape.mlp_chain(u_set, u, jets)
    };
    // value of the control net on the batch (KS forcing)
    let c_batch_val = match (problem.id, c, frozen) {
        (ProblemId::KsCtl, Some((c_set, cp)), _) => {
            let jets = seed_inputs(cp, batch, None, 0);
            let out_c = tape.mlp_chain(c_set, cp, jets);
            Some(tape.value_field(out_c))
        }
        _ => None,
    };
    let u_val = tape.value_field(out_x);
    let r = match problem.id {
        ProblemId::LaplaceFwd | ProblemId::LaplaceCtl => {
            let uxx = tape.deriv_field(out_x, 0, 2);
            let uyy = tape.deriv_field(out_t, 0, 2);
            tape.add(uxx, uyy)
        }
        ProblemId::BurgersFwd | ProblemId::BurgersCtl => {
            let ux = tape.deriv_field(out_x, 0, 1);
            let uxx = tape.deriv_field(out_x, 0, 2);
            let ut = tape.deriv_field(out_t, 0, 1);
            let uux = tape.mul(u_val, ux);
            let adv = tape.add(ut, uux);
            let diff = tape.scale(uxx, -problem.nu);
            tape.add(adv, diff)
        }
        ProblemId::KsFwd | ProblemId::KsCtl => {
            let ux = tape.deriv_field(out_x, 0, 1);
            let uxx = tape.deriv_field(out_x, 0, 2);
            let uxxxx = tape.deriv_field(out_x, 0, 4);
            let ut = tape.deriv_field(out_t, 0, 1);
            let uux = tape.mul(u_val, ux);
            let a = tape.add(ut, uux);
            let b = tape.add(uxx, uxxxx);
            let unforced = tape.add(a, b);
            match (c_batch_val, frozen) {
                (Some(cv), _) => tape.sub(unforced, cv),
                (None, Some(cf)) if problem.id == ProblemId::KsCtl => {
                    let f = frozen_forcing(cf, batch);
                    tape.sub_data(unforced, &f)
                }
                _ => unforced,
            }
        }
    };
    let l_r = tape.sum_sq(r, 1.0 / m as f64);

    // boundary terms
    let mut sq_nodes = Vec::new();
    for term in &terms.boundary {
        match term {
            BoundaryTerm::DirichletData { points, data } => {
                let jets = seed_inputs(u, points, None, 0);
                let out = tape.mlp_chain(u_set, u, jets);
                let val = tape.value_field(out);
                let diff = tape.sub_data(val, data);
                sq_nodes.push(tape.sum_sq(diff, 1.0));
            }
            BoundaryTerm::DirichletControl { points } => {
                let (c_set, cp) = c.ok_or_else(|| {
                    Error::InvalidArg("control-tied boundary term without a control net".into())
                })?;
                let jets = seed_inputs(u, points, None, 0);
                let out = tape.mlp_chain(u_set, u, jets);
                let val = tape.value_field(out);
                let xc = x_only(points);
                let jets_c = seed_inputs(cp, &xc, None, 0);
                let out_c = tape.mlp_chain(c_set, cp, jets_c);
                let cval = tape.value_field(out_c);
                let diff = tape.sub(val, cval);
                sq_nodes.push(tape.sum_sq(diff, 1.0));
            }
            BoundaryTerm::PeriodicPair { a, b, orders } => {
                let jets_a = seed_inputs(u, a, Some(0), *orders);
                let out_a = tape.mlp_chain(u_set, u, jets_a);
                let jets_b = seed_inputs(u, b, Some(0), *orders);
                let out_b = tape.mlp_chain(u_set, u, jets_b);
                for k in 0..=*orders {
                    let da = tape.deriv_field(out_a, 0, k);
                    let db = tape.deriv_field(out_b, 0, k);
                    let diff = tape.sub(da, db);
                    sq_nodes.push(tape.sum_sq(diff, 1.0));
                }
            }
        }
    }
    if sq_nodes.is_empty() {
        return Err(Error::InvalidArg(
            "problem supplies no boundary penalty terms".into(),
        ));
    }
    let l_b = {
        let raw = tape.sum_scalars(&sq_nodes);
        tape.scale_scalar(raw, 1.0 / terms.boundary_entries as f64)
    };

    // initial term
    let l_0 = match &terms.initial {
        None => None,
        Some(InitialTerm::Data { points, data }) => {
            let jets = seed_inputs(u, points, None, 0);
            let out = tape.mlp_chain(u_set, u, jets);
            let val = tape.value_field(out);
            let diff = tape.sub_data(val, data);
            Some(tape.sum_sq(diff, 1.0 / points.nrows() as f64))
        }
        Some(InitialTerm::Control { points }) => {
            let (c_set, cp) = c.ok_or_else(|| {
                Error::InvalidArg("control-tied initial term without a control net".into())
            })?;
            let jets = seed_inputs(u, points, None, 0);
            let out = tape.mlp_chain(u_set, u, jets);
            let val = tape.value_field(out);
            let xc = x_only(points);
            let jets_c = seed_inputs(cp, &xc, None, 0);
            let out_c = tape.mlp_chain(c_set, cp, jets_c);
            let cval = tape.value_field(out_c);
            let diff = tape.sub(val, cval);
            Some(tape.sum_sq(diff, 1.0 / points.nrows() as f64))
        }
    };

    // cost term
    let l_j = match &terms.cost {
        None => None,
        Some(CostTerm::LaplaceFlux { points, target }) => {
            let jets = seed_inputs(u, points, Some(1), 1);
            let out = tape.mlp_chain(u_set, u, jets);
            let uy = tape.deriv_field(out, 0, 1);
            let diff = tape.sub_data(uy, target);
            Some(tape.sum_sq(diff, 1.0 / points.nrows() as f64))
        }
        Some(CostTerm::BurgersTerminal {
            points,
            target,
            factor,
        }) => {
            let jets = seed_inputs(u, points, None, 0);
            let out = tape.mlp_chain(u_set, u, jets);
            let val = tape.value_field(out);
            let diff = tape.sub_data(val, target);
            Some(tape.sum_sq(diff, *factor))
        }
        Some(CostTerm::KsBatchEnergy { sigma, volume }) => {
            let su = tape.sum_sq(u_val, 1.0);
            let node = match c_batch_val {
                Some(cv) => {
                    let sf = tape.sum_sq(cv, *sigma);
                    tape.add_scalar(su, sf)
                }
                None => su,
            };
            Some(tape.scale_scalar(node, 0.5 * volume / m as f64))
        }
    };

    // weighted total
    let mut parts = vec![
        tape.scale_scalar(l_r, weights.w_r),
        tape.scale_scalar(l_b, weights.w_b),
    ];
    if let Some(l0) = l_0 {
        parts.push(tape.scale_scalar(l0, weights.w_0));
    }
    if let Some(lj) = l_j {
        parts.push(tape.scale_scalar(lj, weights.w_j));
    }
    let total = tape.sum_scalars(&parts);

    let nodes = LossNodes {
        total,
        residual: l_r,
        boundary: l_b,
        initial: l_0,
        cost: l_j,
    };
    nodes.check_finite(tape)?;
    Ok(nodes)
}

/// Builds the composite loss of a fixed-data (forward) solve on a fresh
/// tape. `frozen` supplies the control values when `problem` is a control
/// problem evaluated at a given control.
pub fn forward_loss(
    problem: &ProblemSpec,
    u: &MlpParams,
    frozen: Option<&ControlField>,
    batch: &Array2<f64>,
    pts: &TrainingPoints,
    weights: &LossWeights,
) -> Result<(Tape, LossNodes)> {
    let terms = static_terms(problem, pts, frozen, false, false)?;
    let mut tape = Tape::new();
    let u_set = tape.register_params(u);
    let nodes = assemble_loss(
        &mut tape, problem, u_set, u, None, frozen, batch, &terms, weights,
    )?;
    Ok((tape, nodes))
}

/// Builds the augmented two-network loss (state + control nets, cost term
/// weighted by `weights.w_j`) on a fresh tape.
pub fn control_loss(
    problem: &ProblemSpec,
    u: &MlpParams,
    c: &MlpParams,
    batch: &Array2<f64>,
    pts: &TrainingPoints,
    weights: &LossWeights,
) -> Result<(Tape, LossNodes)> {
    if problem.control.is_none() {
        return Err(Error::InvalidArg(format!(
            "'{}' is not a control problem",
            problem.name
        )));
    }
    let terms = static_terms(problem, pts, None, true, true)?;
    let mut tape = Tape::new();
    let u_set = tape.register_params(u);
    let c_set = tape.register_params(c);
    let nodes = assemble_loss(
        &mut tape,
        problem,
        u_set,
        u,
        Some((c_set, c)),
        None,
        batch,
        &terms,
        weights,
    )?;
    Ok((tape, nodes))
}

fn init_u_net(cfg: &TrainConfig, pts: &TrainingPoints) -> Result<MlpParams> {
    let mut u = init_glorot(&cfg.arch_u, cfg.seed_init_u)?;
    u.set_normalization(&pts.residual)?;
    Ok(u)
}

fn init_c_net(problem: &ProblemSpec, cfg: &TrainConfig, pts: &TrainingPoints) -> Result<MlpParams> {
    let arch = cfg
        .arch_c
        .as_ref()
        .ok_or_else(|| Error::InvalidArg("control training needs arch_c".into()))?;
    let mut c = init_glorot(arch, cfg.seed_init_c)?;
    if c.dim_in() == 1 {
        let xs = linspace(problem.lo[0], problem.hi[0], 201);
        let grid = Array2::from_shape_fn((xs.len(), 1), |(i, _)| xs[i]);
        c.set_normalization(&grid)?;
    } else {
        c.set_normalization(&pts.residual)?;
    }
    Ok(c)
}

struct EpochSink {
    csv: Option<std::io::BufWriter<std::fs::File>>,
}

impl EpochSink {
    fn new(cfg: &TrainConfig) -> Result<Self> {
        let csv = match &cfg.history_csv {
            Some(p) => {
                let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
                writeln!(f, "epoch,L_r,L_b,L_0,L_J,total")?;
                Some(f)
            }
            None => None,
        };
        Ok(EpochSink { csv })
    }
    fn record(&mut self, r: &EpochRecord) -> Result<()> {
        if let Some(f) = &mut self.csv {
            writeln!(
                f,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.epoch, r.l_residual, r.l_boundary, r.l_initial, r.l_cost, r.total
            )?;
        }
        Ok(())
    }
}

fn checkpoint(
    cfg: &TrainConfig,
    epoch_tag: &str,
    u: &MlpParams,
    c: Option<&MlpParams>,
) -> Result<()> {
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        u.save_checkpoint(&dir.join(format!("u_{epoch_tag}.json")))?;
        if let Some(cp) = c {
            cp.save_checkpoint(&dir.join(format!("c_{epoch_tag}.json")))?;
        }
    }
    Ok(())
}

/// Shared epoch/minibatch loop. Updates `u` (and `c` when present) in place.
fn run_training(
    problem: &ProblemSpec,
    cfg: &TrainConfig,
    plan: &SamplingPlan,
    pts: &TrainingPoints,
    u: &mut MlpParams,
    mut c: Option<&mut MlpParams>,
    frozen: Option<&ControlField>,
    weights: LossWeights,
) -> Result<TrainHistory> {
    cfg.validate()?;
    let terms = static_terms(problem, pts, frozen, c.is_some(), c.is_some())?;
    let started = Instant::now();
    let mut sink = EpochSink::new(cfg)?;
    let mut adam_u = AdamState::new(u.n_params(), cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut adam_c = c
        .as_ref()
        .map(|cp| AdamState::new(cp.n_params(), cfg.beta1, cfg.beta2, cfg.adam_eps));
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let alpha = cfg.lr_at(epoch);
        let batches = epoch_minibatches(
            &pts.residual,
            plan.m,
            cfg.seed_shuffle.wrapping_add(epoch as u64),
        )?;
        let mut acc = [0.0f64; 5];
        for batch in &batches {
            let (b, gu, gc_opt) = {
                let mut tape = Tape::new();
                let u_set = tape.register_params(u);
                let c_ref: Option<(usize, &MlpParams)> = match &c {
                    Some(cp) => Some((tape.register_params(cp), &**cp)),
                    None => None,
                };
                let nodes = assemble_loss(
                    &mut tape, problem, u_set, u, c_ref, frozen, batch, &terms, &weights,
                )?;
                let b = nodes.read(&tape);
                let grads = grad_params(&tape, nodes.total)?;
                let gc = c_ref.map(|(s, _)| grads.flatten_set(s));
                (b, grads.flatten_set(u_set), gc)
            };
            acc[0] += b.residual;
            acc[1] += b.boundary;
            acc[2] += b.initial;
            acc[3] += b.cost;
            acc[4] += b.total;

            let mut tu = u.flatten();
            adam_u.step(&mut tu, &gu, alpha)?;
            u.assign_from_flat(&tu);

            if let (Some(cp), Some(gc), Some(ac)) = (&mut c, gc_opt, adam_c.as_mut()) {
                let mut tc = cp.flatten();
                ac.step(&mut tc, &gc, alpha)?;
                cp.assign_from_flat(&tc);
            }
        }
        let nb = batches.len() as f64;
        let rec = EpochRecord {
            epoch,
            l_residual: acc[0] / nb,
            l_boundary: acc[1] / nb,
            l_initial: acc[2] / nb,
            l_cost: acc[3] / nb,
            total: acc[4] / nb,
        };
        sink.record(&rec)?;
        records.push(rec);
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            checkpoint(cfg, &format!("{:06}", epoch + 1), u, c.as_deref())?;
        }
    }
    checkpoint(cfg, "final", u, c.as_deref())?;
    Ok(TrainHistory {
        records,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

/// Trains a state network on a fixed-data problem (or on a control problem
/// with the control `frozen`) and returns the trained parameters + history.
pub fn train_forward(
    problem: &ProblemSpec,
    cfg: &TrainConfig,
    plan: &SamplingPlan,
    frozen: Option<&ControlField>,
) -> Result<(MlpParams, TrainHistory)> {
    if problem.control.is_some() && frozen.is_none() {
        return Err(Error::InvalidArg(format!(
            "forward training of '{}' needs a frozen control",
            problem.name
        )));
    }
    let pts = generate(plan)?;
    let mut u = init_u_net(cfg, &pts)?;
    let history = run_training(
        problem,
        cfg,
        plan,
        &pts,
        &mut u,
        None,
        frozen,
        LossWeights {
            w_j: 0.0,
            ..cfg.weights
        },
    )?;
    Ok((u, history))
}

/// Trains state + control networks concurrently under the augmented loss
/// with cost weight `w_j`; returns both nets and the history.
pub fn train_control(
    problem: &ProblemSpec,
    cfg: &TrainConfig,
    plan: &SamplingPlan,
    w_j: f64,
) -> Result<(MlpParams, MlpParams, TrainHistory)> {
    if problem.control.is_none() {
        return Err(Error::InvalidArg(format!(
            "'{}' is not a control problem",
            problem.name
        )));
    }
    let pts = generate(plan)?;
    let mut u = init_u_net(cfg, &pts)?;
    let mut c = init_c_net(problem, cfg, &pts)?;
    let weights = LossWeights {
        w_j,
        ..cfg.weights
    };
    let history = run_training(problem, cfg, plan, &pts, &mut u, Some(&mut c), None, weights)?;
    Ok((u, c, history))
}

/// Samples a trained 1-D control network into a `ControlField` on `n` grid
/// points (periodic layout matching the problem's control domain).
pub fn sample_control_net(
    problem: &ProblemSpec,
    c: &MlpParams,
    n: usize,
) -> Result<ControlField> {
    let kind = problem
        .control
        .ok_or_else(|| Error::InvalidArg(format!("'{}' has no control", problem.name)))?;
    let l = problem.hi[0] - problem.lo[0];
    match c.dim_in() {
        1 => {
            let values: Vec<f64> = (0..n)
                .map(|i| c.forward(&[problem.lo[0] + l * i as f64 / n as f64]))
                .collect();
            ControlField::new_1d(kind, l, values)
        }
        2 => {
            let nt = 101;
            let t_end = problem.hi[1];
            let ts: Vec<f64> = (0..nt)
                .map(|j| t_end * j as f64 / (nt - 1) as f64)
                .collect();
            let mut values = Vec::with_capacity(n * nt);
            for &t in &ts {
                for i in 0..n {
                    values.push(c.forward(&[problem.lo[0] + l * i as f64 / n as f64, t]));
                }
            }
            ControlField::new_forcing(l, n, ts, values)
        }
        d => Err(Error::InvalidArg(format!(
            "control net with {d} inputs is not supported"
        ))),
    }
}

/// Network-quadrature estimate of the cost objective: the same discrete
/// functional the cost loss term uses, evaluated on the stored point sets
/// (residual set for the KS space-time integral).
pub fn pinn_cost_estimate(
    problem: &ProblemSpec,
    u: &MlpParams,
    control: Option<&ControlField>,
    pts: &TrainingPoints,
) -> Result<f64> {
    match problem.id {
        ProblemId::LaplaceCtl => {
            let n = pts.cost.nrows();
            if n == 0 {
                return Err(Error::InvalidArg("no cost points sampled".into()));
            }
            let mut s = 0.0;
            for i in 0..n {
                let x = pts.cost[[i, 0]];
                let y = pts.cost[[i, 1]];
                let b = crate::autodiff::pde_derivatives(u, &[x, y], 0, 1)?;
                let d = b.du_dt - laplace_flux_target(x);
                s += d * d;
            }
            Ok(s / n as f64)
        }
        ProblemId::BurgersCtl => {
            let n = pts.cost.nrows();
            if n == 0 {
                return Err(Error::InvalidArg("no cost points sampled".into()));
            }
            let l = problem.hi[0] - problem.lo[0];
            let mut s = 0.0;
            for i in 0..n {
                let x = pts.cost[[i, 0]];
                let t = pts.cost[[i, 1]];
                let d = u.forward(&[x, t]) - burgers_analytical(x, t);
                s += d * d;
            }
            Ok(0.5 * l / n as f64 * s)
        }
        ProblemId::KsCtl => {
            let cf = control.ok_or_else(|| {
                Error::InvalidArg("KS cost estimate needs the forcing control".into())
            })?;
            let n = pts.residual.nrows();
            let vol = (problem.hi[0] - problem.lo[0]) * (problem.hi[1] - problem.lo[1]);
            let mut s = 0.0;
            for i in 0..n {
                let x = pts.residual[[i, 0]];
                let t = pts.residual[[i, 1]];
                let uv = u.forward(&[x, t]);
                let fv = cf.eval_xt(x, t);
                s += uv * uv + problem.sigma * fv * fv;
            }
            Ok(0.5 * vol * s / n as f64)
        }
        _ => Err(Error::InvalidArg(format!(
            "'{}' has no cost objective",
            problem.name
        ))),
    }
}

/// Relative L2 error of a trained scalar network against a reference
/// function on an `n × n` inclusive grid over the problem box.
pub fn relative_l2_error(
    u: &MlpParams,
    reference: impl Fn(f64, f64) -> f64,
    lo: [f64; 2],
    hi: [f64; 2],
    n: usize,
) -> f64 {
    let xs = linspace(lo[0], hi[0], n);
    let ys = linspace(lo[1], hi[1], n);
    let mut num = 0.0;
    let mut den = 0.0;
    for &y in ys.iter() {
        for &x in xs.iter() {
            let d = u.forward(&[x, y]) - reference(x, y);
            num += d * d;
            den += reference(x, y) * reference(x, y);
        }
    }
    (num / den.max(1e-300)).sqrt()
}
