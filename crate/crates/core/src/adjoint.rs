//! Adjoint PDE solvers, cost-gradient assembly, finite-difference gradient
//! verification, and the direct-adjoint-looping (DAL) optimizer.
//!
//! Each control problem gets a hand-derived continuous adjoint discretized to
//! mirror its forward solver; correctness is gated by the finite-difference
//! gradient check rather than trust in the derivation. For the Laplace
//! problem the optimizer uses a Sobolev-smoothed update direction (a
//! Neumann-data adjoint whose per-mode step response is exactly one), because
//! plain gradient descent on the flux-matching cost is mode-unstable at any
//! useful learning rate; the true gradient remains available for
//! verification.

use crate::error::{Error, Result};
use crate::problems::{
    burgers_analytical, ks_initial, laplace_bottom_data, laplace_flux_target, ControlField,
    ControlKind, ProblemId, ProblemSpec,
};
use crate::solvers::{
    run_burgers, run_ks, solve_laplace_periodic, wall_flux_top, HifiSettings, SpectralConfig,
    SpectralOps, TopBc, Trajectory,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

/// Learning rate, iteration budget, and stop rule of one DAL run.
#[derive(Clone, Debug)]
pub struct DalConfig {
    /// Fixed learning rate β.
    pub beta: f64,
    pub max_iters: usize,
    /// Stop when the relative cost decrease over `plateau_window` iterations
    /// falls below `plateau_tol`.
    pub plateau_tol: f64,
    pub plateau_window: usize,
    /// Stop when the update-direction norm falls below this floor.
    pub grad_floor: f64,
    /// Starting control (zero when absent).
    pub initial: Option<ControlField>,
    /// Solver resolutions.
    pub settings: HifiSettings,
    /// Time-thinning stride used when exporting the KS forcing.
    pub ks_export_stride: usize,
}

impl DalConfig {
    /// Reference settings per problem: β = 1 (Laplace, Burgers) or 1e-3 (KS).
    pub fn defaults_for(problem: &ProblemSpec) -> Result<Self> {
        let (beta, max_iters) = match problem.id {
            ProblemId::LaplaceCtl => (1.0, 2000),
            ProblemId::BurgersCtl => (1.0, 500),
            ProblemId::KsCtl => (1e-3, 1500),
            _ => {
                return Err(Error::InvalidArg(format!(
                    "problem '{}' has no adjoint implementation",
                    problem.name
                )))
            }
        };
        Ok(DalConfig {
            beta,
            max_iters,
            plateau_tol: 1e-8,
            plateau_window: 50,
            grad_floor: 1e-14,
            initial: None,
            settings: HifiSettings::default(),
            ks_export_stride: 100,
        })
    }
}

/// One cost-history row.
#[derive(Clone, Copy, Debug)]
pub struct DalRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
}

/// Optimized control and its per-iteration history.
#[derive(Clone, Debug)]
pub struct DalResult {
    pub control: ControlField,
    pub history: Vec<DalRecord>,
}

impl DalResult {
    pub fn final_cost(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.cost)
    }

    /// Writes `iteration,J,grad_norm` rows.
    pub fn export_history_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "iteration,J,grad_norm")?;
        for r in &self.history {
            writeln!(f, "{},{:.16e},{:.16e}", r.iter, r.cost, r.grad_norm)?;
        }
        Ok(())
    }
}

fn require_full_trajectory(u: &Trajectory, what: &str) -> Result<usize> {
    if u.stride != 1 || u.states.len() < 2 {
        return Err(Error::InvalidArg(format!(
            "{what} needs a full (stride-1) forward trajectory"
        )));
    }
    Ok(u.states.len() - 1)
}

/// Solves the adjoint Burgers equation `λ_t + u·λ_x + ν·λ_xx = 0` backward
/// from `λ(x,T) = −(u(x,T) − target)` along the frozen forward trajectory.
/// The cost gradient with respect to the initial condition is `−λ(·, 0)`.
pub fn adjoint_burgers(
    u: &Trajectory,
    target: &Array1<f64>,
    nu: f64,
    l: f64,
) -> Result<Trajectory> {
    let steps = require_full_trajectory(u, "adjoint_burgers")?;
    let n = u.states[0].len();
    if target.len() != n {
        return Err(Error::InvalidArg(format!(
            "target has {} points, trajectory has {n}",
            target.len()
        )));
    }
    let dt = u.dt;
    let ops = SpectralOps::new(n, l, true);
    let den: Vec<f64> = ops.k.iter().map(|&k| 1.0 + dt * nu * k * k).collect();
    let terminal = Array1::from_shape_fn(n, |j| -(u.states[steps][j] - target[j]));
    let mut lh = ops.to_hat(terminal.as_slice().unwrap());
    let mut states_rev = Vec::with_capacity(steps + 1);
    states_rev.push(terminal);
    for m in 0..steps {
        let u_cur = &u.states[steps - m];
        let lx = ops.to_phys(&ops.dx_hat(&lh));
        let prod: Vec<f64> = u_cur.iter().zip(&lx).map(|(a, b)| a * b).collect();
        let mut ph = ops.to_hat(&prod);
        ops.dealias_inplace(&mut ph);
        for k in 0..n {
            lh[k] = (lh[k] + dt * ph[k]) / den[k];
        }
        states_rev.push(Array1::from_vec(ops.to_phys(&lh)));
    }
    states_rev.reverse();
    Ok(Trajectory {
        times: u.times.clone(),
        states: states_rev,
        dt,
        stride: 1,
    })
}

/// Solves the adjoint KS equation `λ_t + u·λ_x − λ_xx − λ_xxxx = u` backward
/// from `λ(x,T) = 0` and assembles the forcing gradient `g = σf − λ` on the
/// same `(steps+1) × n` grid as the forcing.
pub fn adjoint_ks(
    u: &Trajectory,
    forcing: &Array2<f64>,
    sigma: f64,
    l: f64,
) -> Result<(Trajectory, Array2<f64>)> {
    let steps = require_full_trajectory(u, "adjoint_ks")?;
    let n = u.states[0].len();
    if forcing.dim() != (steps + 1, n) {
        return Err(Error::InvalidArg(format!(
            "forcing grid {:?} does not match trajectory ({} x {n})",
            forcing.dim(),
            steps + 1
        )));
    }
    let dt = u.dt;
    let ops = SpectralOps::new(n, l, true);
    let den: Vec<f64> = ops
        .k
        .iter()
        .map(|&k| 1.0 + dt * k * k * (k * k - 1.0))
        .collect();
    let mut lh = vec![rustfft::num_complex::Complex::new(0.0, 0.0); n];
    let mut states_rev = Vec::with_capacity(steps + 1);
    states_rev.push(Array1::zeros(n));
    for m in 0..steps {
        let u_cur = &u.states[steps - m];
        let lx = ops.to_phys(&ops.dx_hat(&lh));
        let prod: Vec<f64> = u_cur.iter().zip(&lx).map(|(a, b)| a * b).collect();
        let mut ph = ops.to_hat(&prod);
        ops.dealias_inplace(&mut ph);
        let uh = ops.to_hat(u_cur.as_slice().unwrap());
        for k in 0..n {
            lh[k] = (lh[k] + dt * (ph[k] - uh[k])) / den[k];
        }
        states_rev.push(Array1::from_vec(ops.to_phys(&lh)));
    }
    states_rev.reverse();
    let lambda = Trajectory {
        times: u.times.clone(),
        states: states_rev,
        dt,
        stride: 1,
    };
    let mut g = Array2::zeros((steps + 1, n));
    for m in 0..=steps {
        for j in 0..n {
            g[[m, j]] = sigma * forcing[[m, j]] - lambda.states[m][j];
        }
    }
    Ok((lambda, g))
}

/// True gradient of the Laplace flux-matching cost with respect to the
/// top-wall potential: solves the adjoint problem (harmonic λ, zero bottom,
/// top Dirichlet data `2(u_y(x,1) − q_d)`) and returns `(λ, g = λ_y(x,1))`.
pub fn adjoint_laplace(
    u: &Array2<f64>,
    target_flux: &[f64],
) -> Result<(Array2<f64>, Array1<f64>)> {
    let n = u.ncols();
    if u.nrows() != n + 1 || target_flux.len() != n {
        return Err(Error::InvalidArg(
            "adjoint_laplace expects an (n+1) x n periodic solution and n flux targets".into(),
        ));
    }
    let h = 1.0 / n as f64;
    let flux = wall_flux_top(u, h);
    let top: Vec<f64> = (0..n).map(|i| 2.0 * (flux[i] - target_flux[i])).collect();
    let zeros = vec![0.0; n];
    let lam = solve_laplace_periodic(n, &zeros, TopBc::Dirichlet(&top))?;
    let g = wall_flux_top(&lam, h);
    Ok((lam, g))
}

/// Smoothed DAL update direction for the Laplace problem: the top trace of
/// the Neumann-data adjoint (`λ_y(x,1) = u_y(x,1) − q_d`, zero bottom). Each
/// Fourier mode of the fixed-point update `f ← f − β·λ(·,1)` has unit step
/// response, so β = 1 converges in one step up to discretization error.
pub fn laplace_smoothed_direction(u: &Array2<f64>, target_flux: &[f64]) -> Result<Array1<f64>> {
    let n = u.ncols();
    if u.nrows() != n + 1 || target_flux.len() != n {
        return Err(Error::InvalidArg(
            "laplace_smoothed_direction expects an (n+1) x n solution and n flux targets".into(),
        ));
    }
    let h = 1.0 / n as f64;
    let flux = wall_flux_top(u, h);
    let g: Vec<f64> = (0..n).map(|i| flux[i] - target_flux[i]).collect();
    let zeros = vec![0.0; n];
    let lam = solve_laplace_periodic(n, &zeros, TopBc::Neumann(&g))?;
    Ok(lam.row(n).to_owned())
}

fn check_finite_field(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{what} became non-finite")));
    }
    Ok(())
}

struct Plateau {
    window: usize,
    tol: f64,
    costs: Vec<f64>,
}

impl Plateau {
    fn new(cfg: &DalConfig) -> Self {
        Plateau {
            window: cfg.plateau_window,
            tol: cfg.plateau_tol,
            costs: Vec::new(),
        }
    }
    fn push_and_check(&mut self, j: f64) -> bool {
        self.costs.push(j);
        let n = self.costs.len();
        if n <= self.window {
            return false;
        }
        let prev = self.costs[n - 1 - self.window];
        (prev - j) / prev.abs().max(1e-300) < self.tol
    }
}

fn burgers_quadrature_cost(u_t: &Array1<f64>, target: &Array1<f64>, h: f64) -> f64 {
    0.5 * h
        * u_t
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
}

/// Runs the DAL loop for one control problem: forward solve, backward adjoint
/// solve, gradient-descent control update, until plateau or the iteration
/// budget. The cost history records J at the start of every iteration.
pub fn dal_optimize(problem: &ProblemSpec, cfg: &DalConfig) -> Result<DalResult> {
    if !(cfg.beta > 0.0) {
        return Err(Error::InvalidArg("learning rate must be positive".into()));
    }
    match problem.id {
        ProblemId::LaplaceCtl => dal_laplace(cfg),
        ProblemId::BurgersCtl => dal_burgers(problem.nu, cfg),
        ProblemId::KsCtl => dal_ks(problem.sigma, cfg),
        _ => Err(Error::InvalidArg(format!(
            "problem '{}' has no adjoint implementation",
            problem.name
        ))),
    }
}

fn dal_laplace(cfg: &DalConfig) -> Result<DalResult> {
    let n = cfg.settings.laplace_n;
    let h = 1.0 / n as f64;
    let bottom: Vec<f64> = (0..n).map(|i| laplace_bottom_data(i as f64 * h)).collect();
    let q_d: Vec<f64> = (0..n).map(|i| laplace_flux_target(i as f64 * h)).collect();
    let mut f: Array1<f64> = match &cfg.initial {
        Some(c) => c.sample_grid(n),
        None => Array1::zeros(n),
    };
    let mut history = Vec::new();
    let mut plateau = Plateau::new(cfg);
    for iter in 1..=cfg.max_iters {
        let u = solve_laplace_periodic(n, &bottom, TopBc::Dirichlet(f.as_slice().unwrap()))?;
        let flux = wall_flux_top(&u, h);
        let j = (0..n)
            .map(|i| (flux[i] - q_d[i]) * (flux[i] - q_d[i]))
            .sum::<f64>()
            * h;
        let d = laplace_smoothed_direction(&u, &q_d)?;
        check_finite_field(d.as_slice().unwrap(), "Laplace update direction")?;
        let gnorm = (d.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        history.push(DalRecord {
            iter,
            cost: j,
            grad_norm: gnorm,
        });
        if plateau.push_and_check(j) || gnorm < cfg.grad_floor {
            break;
        }
        for i in 0..n {
            f[i] -= cfg.beta * d[i];
        }
    }
    Ok(DalResult {
        control: ControlField::new_1d(ControlKind::BoundaryFunction, 1.0, f.to_vec())?,
        history,
    })
}

fn dal_burgers(nu: f64, cfg: &DalConfig) -> Result<DalResult> {
    let mut scfg = cfg.settings.burgers.clone();
    scfg.store_stride = 1;
    let n = scfg.n;
    let h = scfg.l / n as f64;
    let target = Array1::from_shape_fn(n, |j| burgers_analytical(j as f64 * h, scfg.t_end));
    let mut c: Array1<f64> = match &cfg.initial {
        Some(cf) => cf.sample_grid(n),
        None => Array1::zeros(n),
    };
    let mut history = Vec::new();
    let mut plateau = Plateau::new(cfg);
    for iter in 1..=cfg.max_iters {
        let traj = crate::solvers::solve_burgers(&c, nu, &scfg)?;
        let j = burgers_quadrature_cost(traj.final_state(), &target, h);
        let lambda = adjoint_burgers(&traj, &target, nu, scfg.l)?;
        // dJ/du0 = −λ(·, 0)
        let g: Array1<f64> = lambda.states[0].mapv(|v| -v);
        check_finite_field(g.as_slice().unwrap(), "Burgers gradient")?;
        let gnorm = (g.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        history.push(DalRecord {
            iter,
            cost: j,
            grad_norm: gnorm,
        });
        if plateau.push_and_check(j) || gnorm < cfg.grad_floor {
            break;
        }
        for i in 0..n {
            c[i] -= cfg.beta * g[i];
        }
    }
    Ok(DalResult {
        control: ControlField::new_1d(ControlKind::InitialCondition, scfg.l, c.to_vec())?,
        history,
    })
}

/// One KS forward pass over a raw forcing grid: returns the full trajectory
/// and the trapezoid-in-time quadrature cost ½∫∫(u² + σf²).
fn ks_forward_cost(
    f: &Array2<f64>,
    sigma: f64,
    scfg: &SpectralConfig,
) -> Result<(Trajectory, f64)> {
    let steps = scfg.steps()?;
    let n = scfg.n;
    let h = scfg.l / n as f64;
    let u0 = Array1::from_shape_fn(n, |j| ks_initial(j as f64 * h));
    let mut accum = 0.0;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        dt: scfg.dt,
        stride: 1,
    };
    {
        let mut provider = |s: usize, _t: f64, row: &mut [f64]| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = f[[s, j]];
            }
        };
        let mut observer = |s: usize, t: f64, u: &Array1<f64>| {
            let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
            let mut cell = 0.0;
            for j in 0..n {
                cell += u[j] * u[j] + sigma * f[[s, j]] * f[[s, j]];
            }
            accum += w * cell;
            traj.times.push(t);
            traj.states.push(u.clone());
        };
        run_ks(&u0, &mut provider, scfg, &mut observer)?;
    }
    Ok((traj, 0.5 * accum * scfg.dt * h))
}

fn dal_ks(sigma: f64, cfg: &DalConfig) -> Result<DalResult> {
    let mut scfg = cfg.settings.ks.clone();
    scfg.store_stride = 1;
    let steps = scfg.steps()?;
    let n = scfg.n;
    let h = scfg.l / n as f64;
    let mut f: Array2<f64> = match &cfg.initial {
        Some(cf) => Array2::from_shape_fn((steps + 1, n), |(m, j)| {
            cf.eval_xt(j as f64 * h, m as f64 * scfg.dt)
        }),
        None => Array2::zeros((steps + 1, n)),
    };
    let mut history = Vec::new();
    let mut plateau = Plateau::new(cfg);
    for iter in 1..=cfg.max_iters {
        let (traj, j) = ks_forward_cost(&f, sigma, &scfg)?;
        let (_, g) = adjoint_ks(&traj, &f, sigma, scfg.l)?;
        check_finite_field(g.as_slice().unwrap(), "KS gradient")?;
        let mut gsq = 0.0;
        for m in 0..=steps {
            let w = if m == 0 || m == steps { 0.5 } else { 1.0 };
            for jx in 0..n {
                gsq += w * g[[m, jx]] * g[[m, jx]];
            }
        }
        let gnorm = (gsq * scfg.dt * h).sqrt();
        history.push(DalRecord {
            iter,
            cost: j,
            grad_norm: gnorm,
        });
        if plateau.push_and_check(j) || gnorm < cfg.grad_floor {
            break;
        }
        for m in 0..=steps {
            for jx in 0..n {
                f[[m, jx]] -= cfg.beta * g[[m, jx]];
            }
        }
    }
    // export on a thinned time grid (bilinear interpolation in between)
    let stride = cfg.ks_export_stride.max(1);
    let mut rows: Vec<usize> = (0..=steps).step_by(stride).collect();
    if *rows.last().unwrap() != steps {
        rows.push(steps);
    }
    let ts: Vec<f64> = rows.iter().map(|&m| m as f64 * scfg.dt).collect();
    let mut values = Vec::with_capacity(rows.len() * n);
    for &m in &rows {
        values.extend(f.row(m).iter());
    }
    Ok(DalResult {
        control: ControlField::new_forcing(scfg.l, n, ts, values)?,
        history,
    })
}

/// One direction of a finite-difference gradient check.
#[derive(Clone, Copy, Debug)]
pub struct FdEntry {
    /// Central-difference directional derivative.
    pub fd: f64,
    /// Adjoint-gradient inner product along the same direction.
    pub adjoint: f64,
    /// `|fd − adjoint| / max(|fd|, |adjoint|)`.
    pub rel: f64,
}

/// Report of [`fd_gradient_check`].
#[derive(Clone, Debug)]
pub struct FdCheckReport {
    pub problem: String,
    pub eps: f64,
    pub entries: Vec<FdEntry>,
    pub max_rel: f64,
}

fn entry(fd: f64, adjoint: f64) -> FdEntry {
    let rel = (fd - adjoint).abs() / fd.abs().max(adjoint.abs()).max(1e-12);
    FdEntry { fd, adjoint, rel }
}

fn smooth_field_1d(n: usize, amp: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let tau = std::f64::consts::TAU;
    let mut v = Array1::zeros(n);
    for m in 1..=3 {
        let a = amp * (rng.gen::<f64>() * 2.0 - 1.0);
        let ph = rng.gen::<f64>() * tau;
        for j in 0..n {
            v[j] += a * (tau * m as f64 * j as f64 / n as f64 + ph).sin();
        }
    }
    v
}

fn smooth_field_xt(rows: usize, n: usize, t_end: f64, dt: f64, amp: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let tau = std::f64::consts::TAU;
    let mut v = Array2::zeros((rows, n));
    for m in 1..=3 {
        for q in 0..=2 {
            let a = amp * (rng.gen::<f64>() * 2.0 - 1.0);
            let ph = rng.gen::<f64>() * tau;
            let ps = rng.gen::<f64>() * tau;
            for r in 0..rows {
                let t = r as f64 * dt;
                let ct = (std::f64::consts::PI * q as f64 * t / t_end + ps).cos();
                for j in 0..n {
                    v[[r, j]] += a * (tau * m as f64 * j as f64 / n as f64 + ph).sin() * ct;
                }
            }
        }
    }
    v
}

/// Verifies each problem's adjoint gradient against central finite
/// differences of the quadrature cost along random smooth directions.
///
/// Use [`HifiSettings::for_gradient_check`] for the reference tolerances: the
/// evolution problems need finer time steps (Burgers 1e-4, KS 2e-4) because
/// their discrete adjoints are consistent with, but not the exact transposes
/// of, the forward schemes, so the agreement floor scales with dt (measured:
/// Burgers 1.8e-3 at dt = 1e-3 vs 9.3e-5 at 1e-4; KS 1.07e-2 at dt = 1e-3 vs
/// 5.8e-3 at 5e-4).
pub fn fd_gradient_check(
    problem: &ProblemSpec,
    n_directions: usize,
    eps: f64,
    seed: u64,
    settings: &HifiSettings,
) -> Result<FdCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArg("eps must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n_directions);
    match problem.id {
        ProblemId::BurgersCtl => {
            let mut scfg = settings.burgers.clone();
            scfg.store_stride = 1;
            let n = scfg.n;
            let h = scfg.l / n as f64;
            let target = Array1::from_shape_fn(n, |j| burgers_analytical(j as f64 * h, scfg.t_end));
            let c0 = smooth_field_1d(n, 0.1, &mut rng);
            let traj = crate::solvers::solve_burgers(&c0, problem.nu, &scfg)?;
            let lambda = adjoint_burgers(&traj, &target, problem.nu, scfg.l)?;
            let g: Array1<f64> = lambda.states[0].mapv(|v| -v);
            let cost = |c: &Array1<f64>| -> Result<f64> {
                let final_u = run_burgers(c, problem.nu, &scfg, &mut |_, _, _| {})?;
                Ok(burgers_quadrature_cost(&final_u, &target, h))
            };
            for _ in 0..n_directions {
                let mut d = smooth_field_1d(n, 1.0, &mut rng);
                let norm = (d.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
                d.mapv_inplace(|v| v / norm);
                let jp = cost(&(&c0 + &d.mapv(|v| v * eps)))?;
                let jm = cost(&(&c0 - &d.mapv(|v| v * eps)))?;
                let fd = (jp - jm) / (2.0 * eps);
                let adj = g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() * h;
                entries.push(entry(fd, adj));
            }
        }
        ProblemId::KsCtl => {
            let mut scfg = settings.ks.clone();
            scfg.store_stride = 1;
            let steps = scfg.steps()?;
            let n = scfg.n;
            let h = scfg.l / n as f64;
            let f0 = smooth_field_xt(steps + 1, n, scfg.t_end, scfg.dt, 0.3, &mut rng);
            let (traj, _) = ks_forward_cost(&f0, problem.sigma, &scfg)?;
            let (_, g) = adjoint_ks(&traj, &f0, problem.sigma, scfg.l)?;
            let trap_inner = |a: &Array2<f64>, b: &Array2<f64>| -> f64 {
                let mut s = 0.0;
                for m in 0..=steps {
                    let w = if m == 0 || m == steps { 0.5 } else { 1.0 };
                    for j in 0..n {
                        s += w * a[[m, j]] * b[[m, j]];
                    }
                }
                s * scfg.dt * h
            };
            for _ in 0..n_directions {
                let mut d = smooth_field_xt(steps + 1, n, scfg.t_end, scfg.dt, 1.0, &mut rng);
                let norm = trap_inner(&d, &d).sqrt();
                d.mapv_inplace(|v| v / norm);
                let fp = &f0 + &d.mapv(|v| v * eps);
                let fm = &f0 - &d.mapv(|v| v * eps);
                let (_, jp) = ks_forward_cost(&fp, problem.sigma, &scfg)?;
                let (_, jm) = ks_forward_cost(&fm, problem.sigma, &scfg)?;
                let fd = (jp - jm) / (2.0 * eps);
                entries.push(entry(fd, trap_inner(&g, &d)));
            }
        }
        ProblemId::LaplaceCtl => {
            let n = settings.laplace_n;
            let h = 1.0 / n as f64;
            let bottom: Vec<f64> = (0..n).map(|i| laplace_bottom_data(i as f64 * h)).collect();
            let q_d: Vec<f64> = (0..n).map(|i| laplace_flux_target(i as f64 * h)).collect();
            let f0 = smooth_field_1d(n, 0.3, &mut rng);
            let cost = |f: &Array1<f64>| -> Result<f64> {
                let u = solve_laplace_periodic(n, &bottom, TopBc::Dirichlet(f.as_slice().unwrap()))?;
                let flux = wall_flux_top(&u, h);
                Ok((0..n)
                    .map(|i| (flux[i] - q_d[i]) * (flux[i] - q_d[i]))
                    .sum::<f64>()
                    * h)
            };
            let u0 = solve_laplace_periodic(n, &bottom, TopBc::Dirichlet(f0.as_slice().unwrap()))?;
            let (_, g) = adjoint_laplace(&u0, &q_d)?;
            for _ in 0..n_directions {
                let mut d = smooth_field_1d(n, 1.0, &mut rng);
                let norm = (d.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
                d.mapv_inplace(|v| v / norm);
                let jp = cost(&(&f0 + &d.mapv(|v| v * eps)))?;
                let jm = cost(&(&f0 - &d.mapv(|v| v * eps)))?;
                let fd = (jp - jm) / (2.0 * eps);
                let adj = g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() * h;
                entries.push(entry(fd, adj));
            }
        }
        _ => {
            return Err(Error::InvalidArg(format!(
                "problem '{}' has no adjoint implementation",
                problem.name
            )))
        }
    }
    let max_rel = entries.iter().map(|e| e.rel).fold(0.0f64, f64::max);
    Ok(FdCheckReport {
        problem: problem.name.to_string(),
        eps,
        entries,
        max_rel,
    })
}

impl HifiSettings {
    /// Settings for gradient verification: the evolution problems run with a
    /// refined time step (Burgers dt = 1e-4, KS dt = 2e-4; see
    /// [`fd_gradient_check`]), everything else at the default resolution.
    pub fn for_gradient_check(mut self) -> Self {
        self.burgers.dt = 1e-4;
        self.ks.dt = 2e-4;
        self
    }
}
