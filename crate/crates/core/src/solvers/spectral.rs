//! Fourier pseudo-spectral semi-implicit Euler solvers for the periodic
//! evolution problems (viscous Burgers, Kuramoto-Sivashinsky).
//!
//! Diffusion (and the KS hyperdiffusion) is treated implicitly, the quadratic
//! advection term explicitly, with 2/3-rule dealiasing of the product. The
//! spatial mean of unforced solutions is conserved to round-off because the
//! zero mode of `u·u_x` vanishes identically for real periodic fields.

use crate::error::{Error, Result};
use crate::problems::ControlField;
use ndarray::Array1;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

/// Discretization of one spectral run.
#[derive(Clone, Debug)]
pub struct SpectralConfig {
    /// Fourier modes (grid points); must be a power of two.
    pub n: usize,
    pub dt: f64,
    /// Final time; must be an integer number of steps within round-off.
    pub t_end: f64,
    /// Domain length.
    pub l: f64,
    /// 2/3-rule dealiasing of quadratic products.
    pub dealias: bool,
    /// Keep every `store_stride`-th state in the trajectory (0 = endpoints only).
    pub store_stride: usize,
}

impl SpectralConfig {
    /// Step count, validating the configuration.
    pub fn steps(&self) -> Result<usize> {
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(Error::InvalidArg(format!(
                "spectral modes must be a power of two >= 8, got {}",
                self.n
            )));
        }
        if !(self.dt > 0.0) || !(self.l > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::InvalidArg("dt, L, T must be positive".into()));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(Error::InvalidArg(format!(
                "T = {} is not an integer multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

/// FFT plans, wavenumbers, and the dealiasing mask for one grid.
pub struct SpectralOps {
    pub n: usize,
    pub l: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// Signed wavenumbers 2π·m/L.
    pub k: Vec<f64>,
    keep: Vec<f64>,
}

impl SpectralOps {
    pub fn new(n: usize, l: f64, dealias: bool) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let mut k = vec![0.0; n];
        let mut keep = vec![1.0; n];
        for (m, km) in k.iter_mut().enumerate() {
            let signed = if m <= n / 2 {
                m as isize
            } else {
                m as isize - n as isize
            };
            *km = 2.0 * std::f64::consts::PI * signed as f64 / l;
            if dealias && signed.unsigned_abs() >= n / 3 {
                keep[m] = 0.0;
            }
        }
        SpectralOps {
            n,
            l,
            fft,
            ifft,
            k,
            keep,
        }
    }

    /// Uniform grid x_j = j·L/n.
    pub fn grid(&self) -> Array1<f64> {
        let h = self.l / self.n as f64;
        Array1::from_shape_fn(self.n, |j| j as f64 * h)
    }

    pub fn to_hat(&self, u: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        buf
    }

    pub fn to_phys(&self, uh: &[Complex<f64>]) -> Vec<f64> {
        let mut buf = uh.to_vec();
        self.ifft.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    /// Spectral x-derivative (Nyquist mode zeroed).
    pub fn dx_hat(&self, uh: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let mut out = vec![Complex::new(0.0, 0.0); self.n];
        for m in 0..self.n {
            if m == self.n / 2 {
                continue;
            }
            out[m] = Complex::new(0.0, self.k[m]) * uh[m];
        }
        out
    }

    pub fn dealias_inplace(&self, uh: &mut [Complex<f64>]) {
        for m in 0..self.n {
            uh[m] *= self.keep[m];
        }
    }

    /// Dealiased transform of `u·u_x` for the state spectrum `uh`.
    pub fn advection_hat(&self, uh: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let u = self.to_phys(uh);
        let ux = self.to_phys(&self.dx_hat(uh));
        let prod: Vec<f64> = u.iter().zip(&ux).map(|(a, b)| a * b).collect();
        let mut ph = self.to_hat(&prod);
        self.dealias_inplace(&mut ph);
        ph
    }
}

fn check_finite(u: &[f64], step: usize, t: f64) -> Result<()> {
    let m = u.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if !m.is_finite() || m > 1e6 {
        return Err(Error::Solver(format!(
            "solution blow-up (max |u| = {m:.3e}) at step {step}, t = {t:.6}"
        )));
    }
    Ok(())
}

/// Steps the Burgers equation, calling `observer(step, t, state)` for every
/// step (including step 0); returns the final state.
pub fn run_burgers(
    u0: &Array1<f64>,
    nu: f64,
    cfg: &SpectralConfig,
    observer: &mut dyn FnMut(usize, f64, &Array1<f64>),
) -> Result<Array1<f64>> {
    let steps = cfg.steps()?;
    if u0.len() != cfg.n {
        return Err(Error::InvalidArg(format!(
            "initial state has {} points, grid has {}",
            u0.len(),
            cfg.n
        )));
    }
    let ops = SpectralOps::new(cfg.n, cfg.l, cfg.dealias);
    let den: Vec<f64> = ops.k.iter().map(|&k| 1.0 + cfg.dt * nu * k * k).collect();
    let mut uh = ops.to_hat(u0.as_slice().unwrap());
    let mut u = u0.clone();
    check_finite(u.as_slice().unwrap(), 0, 0.0)?;
    observer(0, 0.0, &u);
    for s in 1..=steps {
        let ph = ops.advection_hat(&uh);
        for m in 0..cfg.n {
            uh[m] = (uh[m] - cfg.dt * ph[m]) / den[m];
        }
        let t = s as f64 * cfg.dt;
        u = Array1::from_vec(ops.to_phys(&uh));
        check_finite(u.as_slice().unwrap(), s, t)?;
        observer(s, t, &u);
    }
    Ok(u)
}

/// Steps the KS equation with a forcing provider that fills `f(x_j, t)` for
/// the current step; returns the final state.
pub fn run_ks(
    u0: &Array1<f64>,
    forcing: &mut dyn FnMut(usize, f64, &mut [f64]),
    cfg: &SpectralConfig,
    observer: &mut dyn FnMut(usize, f64, &Array1<f64>),
) -> Result<Array1<f64>> {
    let steps = cfg.steps()?;
    if u0.len() != cfg.n {
        return Err(Error::InvalidArg(format!(
            "initial state has {} points, grid has {}",
            u0.len(),
            cfg.n
        )));
    }
    let ops = SpectralOps::new(cfg.n, cfg.l, cfg.dealias);
    let den: Vec<f64> = ops
        .k
        .iter()
        .map(|&k| 1.0 + cfg.dt * k * k * (k * k - 1.0))
        .collect();
    let mut uh = ops.to_hat(u0.as_slice().unwrap());
    let mut u = u0.clone();
    let mut frow = vec![0.0; cfg.n];
    check_finite(u.as_slice().unwrap(), 0, 0.0)?;
    observer(0, 0.0, &u);
    for s in 1..=steps {
        let t_prev = (s - 1) as f64 * cfg.dt;
        forcing(s - 1, t_prev, &mut frow);
        let fh = ops.to_hat(&frow);
        let ph = ops.advection_hat(&uh);
        for m in 0..cfg.n {
            uh[m] = (uh[m] + cfg.dt * (fh[m] - ph[m])) / den[m];
        }
        let t = s as f64 * cfg.dt;
        u = Array1::from_vec(ops.to_phys(&uh));
        check_finite(u.as_slice().unwrap(), s, t)?;
        observer(s, t, &u);
    }
    Ok(u)
}

/// Stored states of one run, possibly thinned.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array1<f64>>,
    pub dt: f64,
    pub stride: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &Array1<f64> {
        self.states.last().expect("trajectory has at least one state")
    }

    /// CSV export: one row per stored state, `t` then the nodal values.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (t, u) in self.times.iter().zip(&self.states) {
            write!(f, "{t:.16e}")?;
            for v in u.iter() {
                write!(f, ",{v:.16e}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }

    /// Flat binary export: text header, then row-major little-endian f64.
    pub fn export_bin(&self, path: &Path) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "pdeopt-traj v1 n={} dt={:.16e} stride={} count={}",
            n,
            self.dt,
            self.stride,
            self.states.len()
        )?;
        for (t, u) in self.times.iter().zip(&self.states) {
            f.write_all(&t.to_le_bytes())?;
            for v in u.iter() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn collect_trajectory(
    cfg: &SpectralConfig,
    steps: usize,
) -> (Trajectory, Box<dyn FnMut(usize, f64, &Array1<f64>, &mut Trajectory)>) {
    let stride = if cfg.store_stride == 0 {
        steps.max(1)
    } else {
        cfg.store_stride
    };
    let traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        dt: cfg.dt,
        stride,
    };
    let last = steps;
    (
        traj,
        Box::new(move |s, t, u, tr| {
            if s % tr.stride == 0 || s == last {
                tr.times.push(t);
                tr.states.push(u.clone());
            }
        }),
    )
}

/// Solves Burgers and stores the (possibly thinned) trajectory.
pub fn solve_burgers(u0: &Array1<f64>, nu: f64, cfg: &SpectralConfig) -> Result<Trajectory> {
    let steps = cfg.steps()?;
    let (mut traj, mut push) = collect_trajectory(cfg, steps);
    run_burgers(u0, nu, cfg, &mut |s, t, u| push(s, t, u, &mut traj))?;
    Ok(traj)
}

/// Solves KS with an optional forcing field and stores the trajectory.
pub fn solve_ks(
    u0: &Array1<f64>,
    forcing: Option<&ControlField>,
    cfg: &SpectralConfig,
) -> Result<Trajectory> {
    let steps = cfg.steps()?;
    let (mut traj, mut push) = collect_trajectory(cfg, steps);
    let h = cfg.l / cfg.n as f64;
    let mut provider = |_s: usize, t: f64, row: &mut [f64]| {
        if let Some(cf) = forcing {
            for (j, r) in row.iter_mut().enumerate() {
                *r = cf.eval_xt(j as f64 * h, t);
            }
        } else {
            row.fill(0.0);
        }
    };
    run_ks(u0, &mut provider, cfg, &mut |s, t, u| push(s, t, u, &mut traj))?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{burgers_analytical, ks_initial};

    fn burgers_cfg(dt: f64) -> SpectralConfig {
        SpectralConfig {
            n: 256,
            dt,
            t_end: 5.0,
            l: 4.0,
            dealias: true,
            store_stride: 0,
        }
    }

    fn rel_l2(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    fn burgers_final_error(dt: f64) -> f64 {
        let cfg = burgers_cfg(dt);
        let h = cfg.l / cfg.n as f64;
        let u0 = Array1::from_shape_fn(cfg.n, |j| burgers_analytical(j as f64 * h, 0.0));
        let ua = Array1::from_shape_fn(cfg.n, |j| burgers_analytical(j as f64 * h, 5.0));
        let traj = solve_burgers(&u0, 0.01, &cfg).unwrap();
        rel_l2(traj.final_state(), &ua)
    }

    #[test]
    fn burgers_time_error_is_first_order_and_vanishes_at_small_dt() {
        // semi-implicit Euler is first order in time: halving dt halves the
        // error; the spatial discretization is spectrally converged
        let e3 = burgers_final_error(1e-3);
        let e3h = burgers_final_error(5e-4);
        assert!(
            (3e-5..7e-5).contains(&e3),
            "error at dt = 1e-3 should be ~5e-5, got {e3:.3e}"
        );
        let ratio = e3 / e3h;
        assert!(
            (1.8..2.2).contains(&ratio),
            "halving dt should halve the error; ratio {ratio:.3}"
        );
        // a time step small enough to push the total error below 1e-6
        let e_fine = burgers_final_error(2e-5);
        assert!(e_fine < 1e-6, "dt = 2e-5 error {e_fine:.3e}");
    }

    #[test]
    fn burgers_zero_stays_zero_and_mean_is_conserved() {
        let cfg = SpectralConfig {
            store_stride: 500,
            ..burgers_cfg(1e-3)
        };
        let zero = Array1::zeros(cfg.n);
        let traj = solve_burgers(&zero, 0.01, &cfg).unwrap();
        assert!(traj.final_state().iter().all(|&v| v == 0.0));

        let h = cfg.l / cfg.n as f64;
        let u0 = Array1::from_shape_fn(cfg.n, |j| {
            0.3 + burgers_analytical(j as f64 * h, 0.0)
        });
        let m0 = u0.mean().unwrap();
        let traj = solve_burgers(&u0, 0.01, &cfg).unwrap();
        for s in &traj.states {
            assert!((s.mean().unwrap() - m0).abs() < 1e-12);
        }
    }

    #[test]
    fn burgers_detects_blow_up() {
        let cfg = burgers_cfg(1e-3);
        let u0 = Array1::from_elem(cfg.n, 2e6);
        match solve_burgers(&u0, 0.01, &cfg) {
            Err(Error::Solver(msg)) => assert!(msg.contains("blow-up")),
            other => panic!("expected blow-up error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_grids_and_steps() {
        let mut cfg = burgers_cfg(1e-3);
        cfg.n = 100;
        assert!(cfg.steps().is_err(), "non power of two");
        let mut cfg = burgers_cfg(1e-3);
        cfg.t_end = 5.0005;
        assert!(cfg.steps().is_err(), "non-integral step count");
        let cfg = burgers_cfg(1e-3);
        assert_eq!(cfg.steps().unwrap(), 5000);
    }

    #[test]
    fn ks_zero_state_is_a_fixed_point_and_mean_is_conserved_unforced() {
        let cfg = SpectralConfig {
            n: 128,
            dt: 1e-3,
            t_end: 10.0,
            l: 50.0,
            dealias: true,
            store_stride: 1000,
        };
        let zero = Array1::zeros(cfg.n);
        let traj = solve_ks(&zero, None, &cfg).unwrap();
        assert!(traj.final_state().iter().all(|&v| v == 0.0));

        let h = cfg.l / cfg.n as f64;
        let u0 = Array1::from_shape_fn(cfg.n, |j| ks_initial(j as f64 * h));
        let m0 = u0.mean().unwrap();
        let traj = solve_ks(&u0, None, &cfg).unwrap();
        let mut max_u: f64 = 0.0;
        for s in &traj.states {
            assert!((s.mean().unwrap() - m0).abs() < 1e-10, "mean drift");
            max_u = max_u.max(s.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
        }
        // bounded chaotic regime
        assert!(max_u < 10.0, "unforced KS should stay bounded, max {max_u}");
        assert!(max_u > 1.0, "trajectory should stay active, max {max_u}");
    }

    #[test]
    fn ks_forcing_enters_the_dynamics() {
        let cfg = SpectralConfig {
            n: 128,
            dt: 1e-3,
            t_end: 0.5,
            l: 50.0,
            dealias: true,
            store_stride: 0,
        };
        let zero = Array1::zeros(cfg.n);
        let f = ControlField::new_forcing(
            50.0,
            8,
            vec![0.0, 10.0],
            vec![1.0; 16],
        )
        .unwrap();
        let traj = solve_ks(&zero, Some(&f), &cfg).unwrap();
        // constant unit forcing raises the mean by ~t
        let m = traj.final_state().mean().unwrap();
        assert!((m - 0.5).abs() < 1e-6, "mean response {m}");
    }

    #[test]
    fn trajectory_thinning_and_export() {
        let cfg = SpectralConfig {
            n: 64,
            dt: 1e-2,
            t_end: 0.1,
            l: 4.0,
            dealias: true,
            store_stride: 4,
        };
        let h = cfg.l / cfg.n as f64;
        let u0 = Array1::from_shape_fn(cfg.n, |j| burgers_analytical(j as f64 * h, 0.0));
        let traj = solve_burgers(&u0, 0.01, &cfg).unwrap();
        // steps 0,4,8 by stride plus the final step 10
        assert_eq!(traj.times.len(), 4);
        assert!((traj.times[3] - 0.1).abs() < 1e-12);

        let dir = std::env::temp_dir().join("pdeopt-traj-test");
        std::fs::create_dir_all(&dir).unwrap();
        let csv = dir.join("t.csv");
        let bin = dir.join("t.bin");
        traj.export_csv(&csv).unwrap();
        traj.export_bin(&bin).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 65);
        let head = std::fs::read(&bin).unwrap();
        let header_end = head.iter().position(|&b| b == b'\n').unwrap();
        let header = std::str::from_utf8(&head[..header_end]).unwrap();
        assert!(header.starts_with("pdeopt-traj v1 n=64"));
        assert_eq!(head.len() - header_end - 1, 4 * 65 * 8);
        std::fs::remove_dir_all(&dir).ok();
    }
}
