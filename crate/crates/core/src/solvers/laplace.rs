//! Finite-difference Laplace solvers on the unit square: an SOR iteration
//! for all-Dirichlet data and a direct Fourier-tridiagonal solve for the
//! x-periodic control geometry, plus one-sided wall-flux extraction.
//!
//! Grids are uniform with spacing h = 1/n. Fields are indexed `[j, i]` with
//! row j the y level (0 = bottom) and column i the x position.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 50_000;

/// Top-wall boundary condition of the periodic solver.
pub enum TopBc<'a> {
    /// Prescribed values u(x, 1).
    Dirichlet(&'a [f64]),
    /// Prescribed flux u_y(x, 1), imposed by central-difference ghost
    /// elimination.
    Neumann(&'a [f64]),
}

/// Solves Δu = 0 on the unit square with Dirichlet data on all four edges
/// (each of length n+1, nodal, with matching corners), by SOR to a 5-point
/// residual below 1e-10 in PDE units.
pub fn solve_laplace_dirichlet(
    n: usize,
    bottom: &[f64],
    top: &[f64],
    left: &[f64],
    right: &[f64],
) -> Result<Array2<f64>> {
    if n < 2 {
        return Err(Error::InvalidArg("grid must have n >= 2".into()));
    }
    for (name, e) in [("bottom", bottom), ("top", top), ("left", left), ("right", right)] {
        if e.len() != n + 1 {
            return Err(Error::InvalidArg(format!(
                "{name} edge has {} values, expected {}",
                e.len(),
                n + 1
            )));
        }
    }
    let mut u = Array2::zeros((n + 1, n + 1));
    for i in 0..=n {
        u[[0, i]] = bottom[i];
        u[[n, i]] = top[i];
    }
    for j in 0..=n {
        u[[j, 0]] = left[j];
        u[[j, n]] = right[j];
    }
    let h2 = 1.0 / (n as f64 * n as f64);
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / n as f64).sin());
    for sweep in 1..=MAX_SWEEPS {
        for j in 1..n {
            for i in 1..n {
                let s = u[[j, i - 1]] + u[[j, i + 1]] + u[[j - 1, i]] + u[[j + 1, i]];
                u[[j, i]] += omega * (0.25 * s - u[[j, i]]);
            }
        }
        if sweep % 20 == 0 {
            let mut r: f64 = 0.0;
            for j in 1..n {
                for i in 1..n {
                    let s = u[[j, i - 1]] + u[[j, i + 1]] + u[[j - 1, i]] + u[[j + 1, i]]
                        - 4.0 * u[[j, i]];
                    r = r.max(s.abs() / h2);
                }
            }
            if r < RESIDUAL_TOL {
                return Ok(u);
            }
        }
    }
    Err(Error::Solver(format!(
        "Laplace SOR did not reach residual {RESIDUAL_TOL:.0e} in {MAX_SWEEPS} sweeps"
    )))
}

fn thomas_complex(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &mut [Complex<f64>],
) {
    let m = diag.len();
    let mut c = vec![0.0; m];
    c[0] = sup[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..m {
        let den = diag[i] - sub[i] * c[i - 1];
        if i < m - 1 {
            c[i] = sup[i] / den;
        }
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / den;
    }
    for i in (0..m - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= c[i] * next;
    }
}

/// Solves Δu = 0 on the unit square with periodic x (n columns, x_i = i/n),
/// Dirichlet bottom data, and either Dirichlet or Neumann top data (each of
/// length n). Direct solve: FFT in x, tridiagonal elimination in y; the
/// discrete residual is at round-off. Returns an (n+1) × n field.
pub fn solve_laplace_periodic(n: usize, bottom: &[f64], top: TopBc) -> Result<Array2<f64>> {
    if n < 4 {
        return Err(Error::InvalidArg(format!(
            "periodic grid needs n >= 4, got {n}"
        )));
    }
    let top_vals = match &top {
        TopBc::Dirichlet(v) | TopBc::Neumann(v) => *v,
    };
    if bottom.len() != n || top_vals.len() != n {
        return Err(Error::InvalidArg(format!(
            "boundary data must have n = {n} values"
        )));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut bh: Vec<Complex<f64>> = bottom.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut th: Vec<Complex<f64>> = top_vals.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut bh);
    fft.process(&mut th);

    let h = 1.0 / n as f64;
    // rows of unknowns per mode: j = 1..n-1 (Dirichlet top) or 1..n (Neumann)
    let neumann = matches!(top, TopBc::Neumann(_));
    let m_rows = if neumann { n } else { n - 1 };
    let mut hat_rows: Vec<Vec<Complex<f64>>> = vec![vec![Complex::new(0.0, 0.0); n]; n + 1];
    hat_rows[0].copy_from_slice(&bh);
    if !neumann {
        hat_rows[n].copy_from_slice(&th);
    }

    for m in 0..n {
        let theta = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
        let d = 2.0 * theta.cos() - 4.0;
        let mut sub = vec![1.0; m_rows];
        let mut sup = vec![1.0; m_rows];
        let diag = vec![d; m_rows];
        let mut rhs = vec![Complex::new(0.0, 0.0); m_rows];
        sub[0] = 0.0;
        sup[m_rows - 1] = 0.0;
        rhs[0] -= bh[m];
        if neumann {
            // ghost row: u_{n+1} = u_{n-1} + 2h·g  folds into the last equation
            rhs[m_rows - 1] -= 2.0 * h * th[m];
            sub[m_rows - 1] = 2.0;
        } else {
            rhs[m_rows - 1] -= th[m];
        }
        thomas_complex(&sub, &diag, &sup, &mut rhs);
        for (j, v) in rhs.iter().enumerate() {
            hat_rows[j + 1][m] = *v;
        }
    }

    let mut u = Array2::zeros((n + 1, n));
    let scale = 1.0 / n as f64;
    for (j, row) in hat_rows.iter_mut().enumerate() {
        ifft.process(row);
        for i in 0..n {
            u[[j, i]] = row[i].re * scale;
        }
    }
    Ok(u)
}

/// Top-wall normal derivative u_y(x, 1) by the second-order one-sided stencil
/// `(3u_n − 4u_{n−1} + u_{n−2}) / 2h`, per column.
pub fn wall_flux_top(u: &Array2<f64>, h: f64) -> Array1<f64> {
    let rows = u.nrows();
    assert!(rows >= 3, "flux stencil needs at least 3 rows");
    let (jn, jm, jp) = (rows - 1, rows - 2, rows - 3);
    Array1::from_shape_fn(u.ncols(), |i| {
        (3.0 * u[[jn, i]] - 4.0 * u[[jm, i]] + u[[jp, i]]) / (2.0 * h)
    })
}

/// Maximum 5-point PDE residual |Δ_h u| over interior nodes; periodic
/// variants wrap in x.
pub fn laplace_residual_max(u: &Array2<f64>, periodic_x: bool) -> f64 {
    let (rows, cols) = u.dim();
    let n = rows - 1;
    let h2 = 1.0 / (n as f64 * n as f64);
    let mut r: f64 = 0.0;
    for j in 1..n {
        let irange: Box<dyn Iterator<Item = usize>> = if periodic_x {
            Box::new(0..cols)
        } else {
            Box::new(1..cols - 1)
        };
        for i in irange {
            let (il, ir) = if periodic_x {
                ((i + cols - 1) % cols, (i + 1) % cols)
            } else {
                (i - 1, i + 1)
            };
            let s = u[[j, il]] + u[[j, ir]] + u[[j - 1, i]] + u[[j + 1, i]] - 4.0 * u[[j, i]];
            r = r.max(s.abs() / h2);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        laplace_bottom_data, laplace_flux_target, laplace_forward_solution, laplace_optimal_control,
        laplace_optimal_state,
    };

    fn forward_edges(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = 1.0 / n as f64;
        let bottom = vec![0.0; n + 1];
        let top: Vec<f64> = (0..=n)
            .map(|i| (std::f64::consts::PI * i as f64 * h).sin())
            .collect();
        let left = vec![0.0; n + 1];
        let right = vec![0.0; n + 1];
        (bottom, top, left, right)
    }

    fn forward_error(n: usize) -> f64 {
        let (b, t, l, r) = forward_edges(n);
        let u = solve_laplace_dirichlet(n, &b, &t, &l, &r).unwrap();
        let h = 1.0 / n as f64;
        let mut e: f64 = 0.0;
        for j in 0..=n {
            for i in 0..=n {
                let exact = laplace_forward_solution(i as f64 * h, j as f64 * h);
                e = e.max((u[[j, i]] - exact).abs());
            }
        }
        e
    }

    #[test]
    fn dirichlet_zero_data_gives_zero_field() {
        let z = vec![0.0; 21];
        let u = solve_laplace_dirichlet(20, &z, &z, &z, &z).unwrap();
        assert!(u.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn dirichlet_solver_converges_at_second_order() {
        let (e20, e40, e80) = (forward_error(20), forward_error(40), forward_error(80));
        assert!(e40 < 5e-3, "n = 40 error {e40:.3e}");
        let (r1, r2) = (e20 / e40, e40 / e80);
        assert!((3.5..4.5).contains(&r1), "halving ratio {r1:.2}");
        assert!((3.5..4.5).contains(&r2), "halving ratio {r2:.2}");
    }

    #[test]
    fn dirichlet_solution_meets_the_residual_tolerance() {
        let (b, t, l, r) = forward_edges(40);
        let u = solve_laplace_dirichlet(40, &b, &t, &l, &r).unwrap();
        assert!(laplace_residual_max(&u, false) < 1e-10);
    }

    fn period_samples(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..n).map(|i| f(i as f64 / n as f64)).collect()
    }

    #[test]
    fn periodic_direct_solve_has_round_off_residual() {
        let n = 32;
        let bottom = period_samples(n, laplace_bottom_data);
        let top = period_samples(n, laplace_optimal_control);
        let u = solve_laplace_periodic(n, &bottom, TopBc::Dirichlet(&top)).unwrap();
        assert!(laplace_residual_max(&u, true) < 1e-10);
        // boundary rows are reproduced exactly
        for i in 0..n {
            assert!((u[[0, i]] - bottom[i]).abs() < 1e-12);
            assert!((u[[n, i]] - top[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_solve_approximates_the_harmonic_interpolant() {
        let err = |n: usize| {
            let bottom = period_samples(n, laplace_bottom_data);
            let top = period_samples(n, laplace_optimal_control);
            let u = solve_laplace_periodic(n, &bottom, TopBc::Dirichlet(&top)).unwrap();
            let h = 1.0 / n as f64;
            let mut e: f64 = 0.0;
            for j in 0..=n {
                for i in 0..n {
                    let exact = laplace_optimal_state(i as f64 * h, j as f64 * h);
                    e = e.max((u[[j, i]] - exact).abs());
                }
            }
            e
        };
        let (e32, e64) = (err(32), err(64));
        let ratio = e32 / e64;
        assert!((3.5..4.5).contains(&ratio), "halving ratio {ratio:.2}");
    }

    #[test]
    fn optimal_control_produces_the_target_flux() {
        let flux_err = |n: usize| {
            let bottom = period_samples(n, laplace_bottom_data);
            let top = period_samples(n, laplace_optimal_control);
            let u = solve_laplace_periodic(n, &bottom, TopBc::Dirichlet(&top)).unwrap();
            let h = 1.0 / n as f64;
            let flux = wall_flux_top(&u, h);
            (0..n)
                .map(|i| (flux[i] - laplace_flux_target(i as f64 * h)).abs())
                .fold(0.0f64, f64::max)
        };
        let (e40, e80) = (flux_err(64), flux_err(128));
        assert!(e40 < 2e-2, "flux error {e40:.3e}");
        assert!(e40 / e80 > 2.8, "flux convergence ratio {}", e40 / e80);
    }

    #[test]
    fn neumann_top_imposes_the_prescribed_flux() {
        let n = 64;
        let bottom = period_samples(n, laplace_bottom_data);
        let g = period_samples(n, |x| 0.3 * (2.0 * std::f64::consts::PI * x).cos());
        let u = solve_laplace_periodic(n, &bottom, TopBc::Neumann(&g)).unwrap();
        assert!(laplace_residual_max(&u, true) < 1e-10);
        let h = 1.0 / n as f64;
        let flux = wall_flux_top(&u, h);
        let err = (0..n)
            .map(|i| (flux[i] - g[i]).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 5e-2, "recovered flux error {err:.3e}");
    }

    #[test]
    fn boundary_length_mismatches_are_rejected() {
        let z = vec![0.0; 10];
        assert!(solve_laplace_dirichlet(20, &z, &z, &z, &z).is_err());
        assert!(solve_laplace_periodic(32, &z, TopBc::Dirichlet(&z)).is_err());
        assert!(solve_laplace_periodic(2, &z, TopBc::Dirichlet(&z)).is_err());
    }
}
