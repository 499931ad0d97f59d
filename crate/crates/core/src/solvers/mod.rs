//! High-fidelity classical solvers and unbiased cost evaluation.
//!
//! The spectral steppers and the finite-difference Laplace solver serve two
//! callers: the direct-adjoint-looping optimizer (forward/adjoint sweeps) and
//! [`evaluate_cost_hifi`], which re-solves the state equation for a given
//! control and evaluates the problem's cost functional with its quadrature
//! rule — the cross-validation used to compare optimization engines.

pub mod laplace;
pub mod spectral;

pub use laplace::{laplace_residual_max, solve_laplace_dirichlet, solve_laplace_periodic, wall_flux_top, TopBc};
pub use spectral::{run_burgers, run_ks, solve_burgers, solve_ks, SpectralConfig, SpectralOps, Trajectory};

use crate::error::{Error, Result};
use crate::problems::{
    burgers_analytical, ks_initial, laplace_bottom_data, laplace_flux_target, ControlField,
    ProblemId, ProblemSpec,
};
use ndarray::Array1;

/// Resolutions used for high-fidelity evaluation.
#[derive(Clone, Debug)]
pub struct HifiSettings {
    pub burgers: SpectralConfig,
    pub ks: SpectralConfig,
    /// Laplace grid (n × n cells).
    pub laplace_n: usize,
}

impl Default for HifiSettings {
    /// Desk-scale defaults: Burgers 256 modes / dt 1e-3, KS 128 modes /
    /// dt 1e-3, Laplace 40 × 40.
    fn default() -> Self {
        HifiSettings {
            burgers: SpectralConfig {
                n: 256,
                dt: 1e-3,
                t_end: 5.0,
                l: 4.0,
                dealias: true,
                store_stride: 0,
            },
            ks: SpectralConfig {
                n: 128,
                dt: 1e-3,
                t_end: 10.0,
                l: 50.0,
                dealias: true,
                store_stride: 0,
            },
            laplace_n: 40,
        }
    }
}

impl HifiSettings {
    /// Reference-scale KS resolution (256 modes, dt 1e-4).
    pub fn with_reference_ks(mut self) -> Self {
        self.ks.n = 256;
        self.ks.dt = 1e-4;
        self
    }
}

/// Re-solves the state equation at `control` with the high-fidelity solver
/// and returns the problem's cost. `None` means the zero control.
pub fn evaluate_cost_hifi(
    problem: &ProblemSpec,
    control: Option<&ControlField>,
    settings: &HifiSettings,
) -> Result<f64> {
    match problem.id {
        ProblemId::BurgersCtl => {
            let cfg = &settings.burgers;
            let h = cfg.l / cfg.n as f64;
            let u0 = match control {
                Some(c) => c.sample_grid(cfg.n),
                None => Array1::zeros(cfg.n),
            };
            let u_t = run_burgers(&u0, problem.nu, cfg, &mut |_, _, _| {})?;
            let j = (0..cfg.n)
                .map(|i| {
                    let d = u_t[i] - burgers_analytical(i as f64 * h, cfg.t_end);
                    d * d
                })
                .sum::<f64>();
            Ok(0.5 * h * j)
        }
        ProblemId::KsCtl => {
            let cfg = &settings.ks;
            let steps = cfg.steps()?;
            let h = cfg.l / cfg.n as f64;
            let u0 = Array1::from_shape_fn(cfg.n, |j| ks_initial(j as f64 * h));
            let sigma = problem.sigma;
            let mut accum = 0.0;
            {
                let mut frow = vec![0.0; cfg.n];
                let mut provider = |_s: usize, t: f64, row: &mut [f64]| {
                    if let Some(cf) = control {
                        for (j, r) in row.iter_mut().enumerate() {
                            *r = cf.eval_xt(j as f64 * h, t);
                        }
                    } else {
                        row.fill(0.0);
                    }
                };
                let mut observer = |s: usize, t: f64, u: &Array1<f64>| {
                    // trapezoid weights in time
                    let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
                    if let Some(cf) = control {
                        for (j, r) in frow.iter_mut().enumerate() {
                            *r = cf.eval_xt(j as f64 * h, t);
                        }
                    } else {
                        frow.fill(0.0);
                    }
                    let mut cell = 0.0;
                    for j in 0..cfg.n {
                        cell += u[j] * u[j] + sigma * frow[j] * frow[j];
                    }
                    accum += w * cell;
                };
                run_ks(&u0, &mut provider, cfg, &mut observer)?;
            }
            Ok(0.5 * accum * cfg.dt * h)
        }
        ProblemId::LaplaceCtl => {
            let n = settings.laplace_n;
            let h = 1.0 / n as f64;
            let bottom: Vec<f64> = (0..n).map(|i| laplace_bottom_data(i as f64 * h)).collect();
            let top: Vec<f64> = match control {
                Some(c) => (0..n).map(|i| c.eval(i as f64 * h)).collect(),
                None => vec![0.0; n],
            };
            let u = solve_laplace_periodic(n, &bottom, TopBc::Dirichlet(&top))?;
            let flux = wall_flux_top(&u, h);
            let j = (0..n)
                .map(|i| {
                    let d = flux[i] - laplace_flux_target(i as f64 * h);
                    d * d
                })
                .sum::<f64>();
            Ok(j * h)
        }
        _ => Err(Error::InvalidArg(format!(
            "problem '{}' has no cost functional to evaluate",
            problem.name
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        burgers_control, ks_control, laplace_control, laplace_optimal_control, ControlKind,
    };

    #[test]
    fn burgers_cost_vanishes_at_the_known_optimal_control() {
        let s = HifiSettings::default();
        let n = s.burgers.n;
        let h = s.burgers.l / n as f64;
        let vals: Vec<f64> = (0..n).map(|j| burgers_analytical(j as f64 * h, 0.0)).collect();
        let c = ControlField::new_1d(ControlKind::InitialCondition, s.burgers.l, vals).unwrap();
        let j = evaluate_cost_hifi(&burgers_control(), Some(&c), &s).unwrap();
        assert!(j < 1e-10, "cost at the optimum should be ~0, got {j:.3e}");
    }

    #[test]
    fn burgers_cost_at_zero_control_is_the_target_energy() {
        // zero is a fixed point, so the final state is zero and the cost is
        // exactly half the squared quadrature norm of the target
        let s = HifiSettings::default();
        let j = evaluate_cost_hifi(&burgers_control(), None, &s).unwrap();
        let n = s.burgers.n;
        let h = s.burgers.l / n as f64;
        let expect = 0.5
            * h
            * (0..n)
                .map(|i| burgers_analytical(i as f64 * h, 5.0).powi(2))
                .sum::<f64>();
        assert!(j > 1e-5, "baseline should be well above zero, got {j:.3e}");
        assert!((j - expect).abs() < 1e-12 * expect.max(1.0));
    }

    #[test]
    fn ks_cost_at_zero_control_matches_the_unforced_baseline() {
        let s = HifiSettings::default();
        let j = evaluate_cost_hifi(&ks_control(), None, &s).unwrap();
        assert!(
            (380.0..420.0).contains(&j),
            "unforced KS baseline should be ~399, got {j:.2}"
        );
    }

    #[test]
    fn laplace_cost_is_small_at_the_optimum_and_large_at_zero() {
        let s = HifiSettings::default();
        let n = s.laplace_n;
        let vals: Vec<f64> = (0..n)
            .map(|i| laplace_optimal_control(i as f64 / n as f64))
            .collect();
        let c = ControlField::new_1d(ControlKind::BoundaryFunction, 1.0, vals).unwrap();
        let j_opt = evaluate_cost_hifi(&laplace_control(), Some(&c), &s).unwrap();
        assert!(j_opt < 1e-4, "optimum cost {j_opt:.3e}");
        let j0 = evaluate_cost_hifi(&laplace_control(), None, &s).unwrap();
        // the bottom mode barely reaches the far wall, so the flux mismatch is
        // essentially the target itself: J ≈ mean cos² = 1/2
        assert!((0.45..0.55).contains(&j0), "zero-control cost {j0:.3}");
    }

    #[test]
    fn forward_problems_have_no_cost() {
        let s = HifiSettings::default();
        assert!(evaluate_cost_hifi(&crate::problems::burgers(), None, &s).is_err());
    }
}
