//! Benchmark problem registry: residual operators, boundary/initial data,
//! cost functionals, control parameterizations, and analytical oracles for
//! the three model problems (Laplace, viscous Burgers, Kuramoto-Sivashinsky),
//! each in a forward and an optimal-control variant.

use crate::autodiff::DerivativeBundle;
use crate::error::{Error, Result};
use crate::sampling::{BoundaryLayout, SamplingPlan};
use ndarray::Array1;
use std::io::{BufRead, Write};
use std::path::Path;

/// Numerically stable sech.
pub fn sech(w: f64) -> f64 {
    let a = w.abs();
    2.0 * (-a).exp() / (1.0 + (-2.0 * a).exp())
}

/// Which quantity a control field parameterizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlKind {
    /// A boundary function f(x) (Laplace top-wall potential).
    BoundaryFunction,
    /// An initial condition u₀(x) (Burgers).
    InitialCondition,
    /// A space-time forcing f(x, t) (Kuramoto-Sivashinsky).
    SpaceTimeForcing,
}

impl ControlKind {
    fn tag(&self) -> &'static str {
        match self {
            ControlKind::BoundaryFunction => "boundary",
            ControlKind::InitialCondition => "initial",
            ControlKind::SpaceTimeForcing => "forcing",
        }
    }
    fn from_tag(s: &str) -> Result<Self> {
        match s {
            "boundary" => Ok(ControlKind::BoundaryFunction),
            "initial" => Ok(ControlKind::InitialCondition),
            "forcing" => Ok(ControlKind::SpaceTimeForcing),
            _ => Err(Error::Parse(format!("unknown control kind '{s}'"))),
        }
    }
}

/// The six registered problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemId {
    LaplaceFwd,
    LaplaceCtl,
    BurgersFwd,
    BurgersCtl,
    KsFwd,
    KsCtl,
}

/// Registry names, in registry order.
pub const PROBLEM_NAMES: [&str; 6] = [
    "laplace-fwd",
    "laplace-ctl",
    "burgers-fwd",
    "burgers-ctl",
    "ks-fwd",
    "ks-ctl",
];

/// Immutable description of one benchmark problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub id: ProblemId,
    pub name: &'static str,
    /// Domain box: (x, t) for evolution problems, (x, y) for Laplace.
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Viscosity (Burgers only; 0 elsewhere).
    pub nu: f64,
    /// Control-regularization weight in the quadratic cost (KS only).
    pub sigma: f64,
    /// Control parameterization, if this is a control problem.
    pub control: Option<ControlKind>,
}

/// Laplace problem solved forward: Δu = 0 on the unit square with Dirichlet
/// data 0 on three edges and `sin(πx)` on the top edge.
pub fn laplace_forward() -> ProblemSpec {
    ProblemSpec {
        id: ProblemId::LaplaceFwd,
        name: "laplace-fwd",
        lo: [0.0, 0.0],
        hi: [1.0, 1.0],
        nu: 0.0,
        sigma: 0.0,
        control: None,
    }
}

/// Laplace control problem: bottom Dirichlet data `sin(2πx)`, controllable
/// top-wall potential f(x), x-periodic sides; cost penalizes the mismatch
/// between the top-wall flux u_y(x,1) and the target `cos(2πx)`.
pub fn laplace_control() -> ProblemSpec {
    ProblemSpec {
        id: ProblemId::LaplaceCtl,
        name: "laplace-ctl",
        lo: [0.0, 0.0],
        hi: [1.0, 1.0],
        nu: 0.0,
        sigma: 0.0,
        control: Some(ControlKind::BoundaryFunction),
    }
}

/// Viscous Burgers equation, ν = 0.01, on [0,4]×[0,5] with periodic x, run
/// forward from the closed-form initial state.
pub fn burgers() -> ProblemSpec {
    ProblemSpec {
        id: ProblemId::BurgersFwd,
        name: "burgers-fwd",
        lo: [0.0, 0.0],
        hi: [4.0, 5.0],
        nu: 0.01,
        sigma: 0.0,
        control: None,
    }
}

/// Burgers control problem: find the initial condition whose final state at
/// T = 5 matches the closed-form solution's final state (cost = ½∫|u(·,T)−u_a(·,T)|²).
pub fn burgers_control() -> ProblemSpec {
    ProblemSpec {
        control: Some(ControlKind::InitialCondition),
        id: ProblemId::BurgersCtl,
        name: "burgers-ctl",
        ..burgers()
    }
}

/// Kuramoto-Sivashinsky equation on [0,50]×[0,10] (chaotic regime), periodic
/// x, run forward unforced.
pub fn ks() -> ProblemSpec {
    ProblemSpec {
        id: ProblemId::KsFwd,
        name: "ks-fwd",
        lo: [0.0, 0.0],
        hi: [50.0, 10.0],
        nu: 0.0,
        sigma: 1.0,
        control: None,
    }
}

/// KS control problem: space-time forcing f(x,t) minimizing the quadratic
/// regulator cost ½∫∫(u² + σf²), σ = 1.
pub fn ks_control() -> ProblemSpec {
    ProblemSpec {
        control: Some(ControlKind::SpaceTimeForcing),
        id: ProblemId::KsCtl,
        name: "ks-ctl",
        ..ks()
    }
}

/// Looks a problem up by its registry name.
pub fn by_name(name: &str) -> Result<ProblemSpec> {
    match name {
        "laplace-fwd" => Ok(laplace_forward()),
        "laplace-ctl" => Ok(laplace_control()),
        "burgers-fwd" => Ok(burgers()),
        "burgers-ctl" => Ok(burgers_control()),
        "ks-fwd" => Ok(ks()),
        "ks-ctl" => Ok(ks_control()),
        _ => Err(Error::InvalidArg(format!(
            "unknown problem '{name}' (expected one of {})",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

impl ProblemSpec {
    /// Strong-form residual F(u, c) at one point, given the solution's
    /// derivatives and (for forced problems) the local control value.
    pub fn residual(&self, b: &DerivativeBundle, forcing: f64) -> f64 {
        match self.id {
            ProblemId::LaplaceFwd | ProblemId::LaplaceCtl => b.d2u_dx2 + b.d2u_dt2,
            ProblemId::BurgersFwd | ProblemId::BurgersCtl => {
                b.du_dt + b.u * b.du_dx - self.nu * b.d2u_dx2
            }
            ProblemId::KsFwd | ProblemId::KsCtl => {
                b.du_dt + b.u * b.du_dx + b.d2u_dx2 + b.d4u_dx4 - forcing
            }
        }
    }

    /// Derivative orders (x, second coordinate) the residual needs.
    pub fn pde_orders(&self) -> (usize, usize) {
        match self.id {
            ProblemId::LaplaceFwd | ProblemId::LaplaceCtl => (2, 2),
            ProblemId::BurgersFwd | ProblemId::BurgersCtl => (2, 1),
            ProblemId::KsFwd | ProblemId::KsCtl => (4, 1),
        }
    }

    /// Closed-form solution of the state equation, where one exists. For the
    /// control problems this is the state at the known optimal control.
    pub fn analytical(&self, x: f64, t: f64) -> Option<f64> {
        match self.id {
            ProblemId::LaplaceFwd => Some(laplace_forward_solution(x, t)),
            ProblemId::LaplaceCtl => Some(laplace_optimal_state(x, t)),
            ProblemId::BurgersFwd | ProblemId::BurgersCtl => Some(burgers_analytical(x, t)),
            ProblemId::KsFwd | ProblemId::KsCtl => None,
        }
    }

    /// Known optimal control as a function of x (1-D controls only).
    pub fn optimal_control(&self, x: f64) -> Option<f64> {
        match self.id {
            ProblemId::LaplaceCtl => Some(laplace_optimal_control(x)),
            ProblemId::BurgersCtl => Some(burgers_analytical(x, 0.0)),
            _ => None,
        }
    }

    /// Training point counts and layout used by the reference experiments.
    pub fn default_sampling(&self, seed: u64) -> SamplingPlan {
        let (n_r, m, boundary, n_0, n_j) = match self.id {
            ProblemId::LaplaceFwd => (10_000, 10, BoundaryLayout::Perimeter { n: 160 }, 0, 0),
            ProblemId::LaplaceCtl => (
                10_000,
                10,
                BoundaryLayout::DirichletTopBottomPeriodicSides {
                    n_edge: 40,
                    n_pair: 40,
                },
                0,
                41,
            ),
            ProblemId::BurgersFwd => (20_000, 10, BoundaryLayout::PeriodicPairs { n: 41 }, 41, 0),
            ProblemId::BurgersCtl => (20_000, 10, BoundaryLayout::PeriodicPairs { n: 41 }, 41, 41),
            ProblemId::KsFwd => (80_000, 20, BoundaryLayout::PeriodicPairs { n: 41 }, 41, 0),
            ProblemId::KsCtl => (80_000, 20, BoundaryLayout::PeriodicPairs { n: 41 }, 41, 0),
        };
        SamplingPlan {
            n_r,
            m,
            lo: self.lo.to_vec(),
            hi: self.hi.to_vec(),
            boundary,
            n_0,
            n_j,
            seed,
        }
    }
}

/// Harmonic function matching the forward Laplace boundary data:
/// `sin(πx)·sinh(πy)/sinh(π)`.
pub fn laplace_forward_solution(x: f64, y: f64) -> f64 {
    (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sinh()
        / std::f64::consts::PI.sinh()
}

/// Bottom-wall Dirichlet data of the Laplace control problem.
pub fn laplace_bottom_data(x: f64) -> f64 {
    (2.0 * std::f64::consts::PI * x).sin()
}

/// Target top-wall flux q_d of the Laplace control problem.
pub fn laplace_flux_target(x: f64) -> f64 {
    (2.0 * std::f64::consts::PI * x).cos()
}

/// Closed-form optimal top-wall potential of the Laplace control problem:
/// `sech(2π)·sin(2πx) + (1/2π)·tanh(2π)·cos(2πx)`.
pub fn laplace_optimal_control(x: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI;
    sech(w) * (w * x).sin() + w.tanh() / w * (w * x).cos()
}

/// State attained at the optimal Laplace control: the harmonic interpolant of
/// the bottom data and the optimal top potential, mode by mode.
pub fn laplace_optimal_state(x: f64, y: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI;
    // sinh(w a)/sinh(w) in overflow-safe exponential form
    let ratio = |a: f64| ((a - 1.0) * w).exp() * (1.0 - (-2.0 * w * a).exp()) / (1.0 - (-2.0 * w).exp());
    let s_mode = ratio(1.0 - y) + ratio(y) * sech(w);
    let c_mode = ratio(y) * w.tanh() / w;
    s_mode * (w * x).sin() + c_mode * (w * x).cos()
}

/// Closed-form solution of the viscous Burgers benchmark,
/// `u_a(x,t) = 2νπ e^{−π²ν(t−5)} sin(πx) / (2 + e^{−π²ν(t−5)} cos(πx))`.
pub fn burgers_analytical(x: f64, t: f64) -> f64 {
    let nu = 0.01;
    let pi = std::f64::consts::PI;
    let e = (-pi * pi * nu * (t - 5.0)).exp();
    2.0 * nu * pi * e * (pi * x).sin() / (2.0 + e * (pi * x).cos())
}

/// Initial condition of the KS benchmark: `cos(2πx/10) + sech((x−25)/5)`.
pub fn ks_initial(x: f64) -> f64 {
    (2.0 * std::f64::consts::PI * x / 10.0).cos() + sech((x - 25.0) / 5.0)
}

/// A control function sampled on a uniform grid, exchangeable between the
/// optimization engines.
///
/// 1-D controls interpolate with a periodic cubic (Catmull-Rom); space-time
/// forcings interpolate bilinearly, wrapping in x and clamping in t. The x
/// grid holds period points `x_j = j·period/n` without a duplicated endpoint,
/// so periodic continuity holds by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlField {
    pub kind: ControlKind,
    pub period: f64,
    pub nx: usize,
    /// Time abscissae (strictly increasing) for forcing fields; empty otherwise.
    pub ts: Vec<f64>,
    /// Row-major `(nt, nx)` for forcings; length `nx` for 1-D controls.
    pub values: Vec<f64>,
}

impl ControlField {
    /// 1-D control from values on the period grid.
    pub fn new_1d(kind: ControlKind, period: f64, values: Vec<f64>) -> Result<Self> {
        if kind == ControlKind::SpaceTimeForcing {
            return Err(Error::InvalidArg(
                "forcing controls need time samples; use new_forcing".into(),
            ));
        }
        if !(period > 0.0) || values.len() < 2 {
            return Err(Error::InvalidArg("control grid too small".into()));
        }
        Ok(ControlField {
            kind,
            period,
            nx: values.len(),
            ts: Vec::new(),
            values,
        })
    }

    /// Space-time forcing from row-major `(nt, nx)` values at time abscissae `ts`.
    pub fn new_forcing(period: f64, nx: usize, ts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if !(period > 0.0) || nx < 2 || ts.len() < 2 {
            return Err(Error::InvalidArg("forcing grid too small".into()));
        }
        if values.len() != nx * ts.len() {
            return Err(Error::InvalidArg(format!(
                "forcing values: expected {} = {} x {}, got {}",
                nx * ts.len(),
                ts.len(),
                nx,
                values.len()
            )));
        }
        if !ts.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArg("time abscissae must increase".into()));
        }
        Ok(ControlField {
            kind: ControlKind::SpaceTimeForcing,
            period,
            nx,
            ts,
            values,
        })
    }

    fn cubic_row(&self, row: &[f64], x: f64) -> f64 {
        let n = self.nx;
        let h = self.period / n as f64;
        let u = (x.rem_euclid(self.period)) / h;
        let j = (u.floor() as usize).min(n - 1);
        let s = u - j as f64;
        let p = |i: isize| row[(j as isize + i).rem_euclid(n as isize) as usize];
        let (p0, p1, p2, p3) = (p(-1), p(0), p(1), p(2));
        0.5 * (2.0 * p1
            + s * ((p2 - p0)
                + s * ((2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) + s * (3.0 * (p1 - p2) + p3 - p0))))
    }

    /// Evaluates a 1-D control (periodic cubic interpolation).
    pub fn eval(&self, x: f64) -> f64 {
        assert!(
            self.kind != ControlKind::SpaceTimeForcing,
            "space-time forcing needs eval_xt"
        );
        self.cubic_row(&self.values, x)
    }

    /// Evaluates the field at (x, t): bilinear for forcings (x wraps, t
    /// clamps); 1-D controls ignore t.
    pub fn eval_xt(&self, x: f64, t: f64) -> f64 {
        if self.kind != ControlKind::SpaceTimeForcing {
            return self.eval(x);
        }
        let nt = self.ts.len();
        let i = match self.ts.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= nt => nt - 2,
            p => p - 1,
        };
        let (t0, t1) = (self.ts[i], self.ts[i + 1]);
        let a = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let lin = |row: &[f64]| {
            let h = self.period / self.nx as f64;
            let u = (x.rem_euclid(self.period)) / h;
            let j = (u.floor() as usize).min(self.nx - 1);
            let s = u - j as f64;
            let jn = (j + 1) % self.nx;
            row[j] * (1.0 - s) + row[jn] * s
        };
        let r0 = lin(&self.values[i * self.nx..(i + 1) * self.nx]);
        let r1 = lin(&self.values[(i + 1) * self.nx..(i + 2) * self.nx]);
        r0 * (1.0 - a) + r1 * a
    }

    /// Samples a 1-D control on an `n`-point period grid.
    pub fn sample_grid(&self, n: usize) -> Array1<f64> {
        let h = self.period / n as f64;
        Array1::from_shape_fn(n, |j| self.eval(j as f64 * h))
    }

    /// Writes the interchange text format (round-trips byte-identically).
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "pdeopt-control v1")?;
        writeln!(f, "kind {}", self.kind.tag())?;
        writeln!(f, "period {:.16e}", self.period)?;
        writeln!(f, "nx {}", self.nx)?;
        writeln!(f, "nt {}", self.ts.len())?;
        for t in &self.ts {
            writeln!(f, "t {t:.16e}")?;
        }
        writeln!(f, "values")?;
        for v in &self.values {
            writeln!(f, "{v:.16e}")?;
        }
        Ok(())
    }

    /// Reads the interchange text format.
    pub fn read_text(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Parse("control file truncated".into()))
        };
        if next()? != "pdeopt-control v1" {
            return Err(Error::Parse("not a control file (bad header)".into()));
        }
        let expect = |line: String, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| Error::Parse(format!("expected '{key} ...', got '{line}'")))
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad number '{s}'")))
        };
        let kind = ControlKind::from_tag(&expect(next()?, "kind")?)?;
        let period = parse_f(&expect(next()?, "period")?)?;
        let nx: usize = expect(next()?, "nx")?
            .parse()
            .map_err(|_| Error::Parse("bad nx".into()))?;
        let nt: usize = expect(next()?, "nt")?
            .parse()
            .map_err(|_| Error::Parse("bad nt".into()))?;
        let mut ts = Vec::with_capacity(nt);
        for _ in 0..nt {
            ts.push(parse_f(&expect(next()?, "t")?)?);
        }
        if next()? != "values" {
            return Err(Error::Parse("missing 'values' marker".into()));
        }
        let n_values = if nt > 0 { nt * nx } else { nx };
        let mut values = Vec::with_capacity(n_values);
        for _ in 0..n_values {
            values.push(parse_f(&next()?)?);
        }
        if kind == ControlKind::SpaceTimeForcing {
            ControlField::new_forcing(period, nx, ts, values)
        } else {
            ControlField::new_1d(kind, period, values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::jet::Jet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn registry_resolves_every_name_and_rejects_unknowns() {
        for name in PROBLEM_NAMES {
            let p = by_name(name).unwrap();
            assert_eq!(p.name, name);
        }
        assert!(by_name("heat-fwd").is_err());
    }

    #[test]
    fn control_problems_have_exactly_one_control_kind() {
        assert_eq!(laplace_control().control, Some(ControlKind::BoundaryFunction));
        assert_eq!(burgers_control().control, Some(ControlKind::InitialCondition));
        assert_eq!(ks_control().control, Some(ControlKind::SpaceTimeForcing));
        assert!(laplace_forward().control.is_none());
        assert!(burgers().control.is_none());
        assert!(ks().control.is_none());
    }

    #[test]
    fn laplace_forward_solution_matches_boundary_data() {
        assert!((laplace_forward_solution(0.5, 1.0) - 1.0).abs() < 1e-15);
        for i in 0..10 {
            let x = i as f64 / 9.0;
            assert!(laplace_forward_solution(x, 0.0).abs() < 1e-15);
            let diff = laplace_forward_solution(x, 1.0) - (std::f64::consts::PI * x).sin();
            assert!(diff.abs() < 1e-15);
        }
        for j in 0..10 {
            let y = j as f64 / 9.0;
            assert!(laplace_forward_solution(0.0, y).abs() < 1e-15);
            assert!(laplace_forward_solution(1.0, y).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_forward_solution_is_harmonic() {
        // residual via the closed form's exact second derivatives
        let pi = std::f64::consts::PI;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = laplace_forward();
        for _ in 0..100 {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            let uxx = -pi * pi * laplace_forward_solution(x, y);
            let uyy = pi * pi * laplace_forward_solution(x, y);
            let b = crate::autodiff::DerivativeBundle {
                d2u_dx2: uxx,
                d2u_dt2: uyy,
                ..Default::default()
            };
            assert!(p.residual(&b, 0.0).abs() < 1e-10);
        }
    }

    #[test]
    fn laplace_optimal_control_matches_closed_form_values() {
        let w = 2.0 * std::f64::consts::PI;
        // f*(0) = (1/2π)·tanh(2π), f*(0.25) = sech(2π)
        assert!((laplace_optimal_control(0.0) - w.tanh() / w).abs() < 1e-15);
        assert!((laplace_optimal_control(0.25) - sech(w)).abs() < 1e-15);
        assert!((laplace_optimal_control(0.0) - 0.15915383058).abs() < 1e-7);
    }

    #[test]
    fn laplace_optimal_control_agrees_with_fourier_mode_oracle() {
        // Independent route: for bottom data b(x) and flux target q(x) with
        // Fourier coefficients b_k, q_k on modes e^{i 2πk x}, the optimum is
        // f_k = b_k·sech(w_k) + q_k·tanh(w_k)/w_k with w_k = 2π|k|.
        // Compute b_k, q_k by quadrature and resum — no use of the closed form.
        let n = 256;
        let h = 1.0 / n as f64;
        let w = 2.0 * std::f64::consts::PI;
        let mut err_max: f64 = 0.0;
        for i in 0..n {
            let x = i as f64 * h;
            // only the k = 1 sine (bottom) and cosine (flux) modes are active;
            // their quadrature coefficients on the period grid are exact
            let mut bs = 0.0;
            let mut qc = 0.0;
            for j in 0..n {
                let xj = j as f64 * h;
                bs += laplace_bottom_data(xj) * (w * xj).sin() * 2.0 * h;
                qc += laplace_flux_target(xj) * (w * xj).cos() * 2.0 * h;
            }
            let oracle = bs * sech(w) * (w * x).sin() + qc * (w.tanh() / w) * (w * x).cos();
            err_max = err_max.max((oracle - laplace_optimal_control(x)).abs());
        }
        assert!(err_max < 1e-12, "fourier oracle mismatch {err_max}");
    }

    #[test]
    fn laplace_optimal_state_is_harmonic_and_matches_its_walls() {
        let p = laplace_control();
        let w = 2.0 * std::f64::consts::PI;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            // both wall modes have wavenumber 2π, so Δ(mode) = (∂yy − w²)(mode)
            let h = 1e-4;
            let uyy = (laplace_optimal_state(x, y + h) - 2.0 * laplace_optimal_state(x, y)
                + laplace_optimal_state(x, y - h))
                / (h * h);
            let uxx = -w * w * laplace_optimal_state(x, y);
            let b = crate::autodiff::DerivativeBundle {
                d2u_dx2: uxx,
                d2u_dt2: uyy,
                ..Default::default()
            };
            assert!(p.residual(&b, 0.0).abs() < 1e-4);
        }
        for i in 0..20 {
            let x = i as f64 / 20.0;
            assert!((laplace_optimal_state(x, 0.0) - laplace_bottom_data(x)).abs() < 1e-12);
            assert!((laplace_optimal_state(x, 1.0) - laplace_optimal_control(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn burgers_analytical_satisfies_its_pde() {
        // independent derivatives of the closed form via truncated Taylor jets
        let p = burgers();
        let (nu, pi) = (0.01, std::f64::consts::PI);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = rng.gen::<f64>() * 4.0;
            let t = rng.gen::<f64>() * 5.0;
            let e = (-pi * pi * nu * (t - 5.0)).exp();
            // x-jets at fixed t
            let jx = Jet::var(x, 2).scale(pi);
            let (sx, cx) = jx.sin_cos();
            let ux = sx.scale(2.0 * nu * pi * e) / cx.scale(e).add_scalar(2.0);
            // t-jet at fixed x
            let et = Jet::var(t, 1).add_scalar(-5.0).scale(-pi * pi * nu).exp();
            let ut = et.scale(2.0 * nu * pi * (pi * x).sin())
                / et.scale((pi * x).cos()).add_scalar(2.0);
            let b = crate::autodiff::DerivativeBundle {
                u: ux.value(),
                du_dx: ux.deriv(1),
                d2u_dx2: ux.deriv(2),
                du_dt: ut.deriv(1),
                ..Default::default()
            };
            assert!(
                p.residual(&b, 0.0).abs() < 1e-10,
                "residual {} at ({x},{t})",
                p.residual(&b, 0.0)
            );
        }
    }

    #[test]
    fn burgers_analytical_is_periodic_and_vanishes_at_nodes() {
        for t in [0.0, 1.3, 5.0] {
            assert_eq!(burgers_analytical(0.0, t), 0.0);
            assert!(burgers_analytical(4.0, t).abs() < 1e-15);
            assert!((burgers_analytical(0.0, t) - burgers_analytical(4.0, t)).abs() < 1e-15);
        }
        // at x = 1 the sine factor vanishes; x = 0.5 probes the full closed
        // form: u_a(0.5, 0) = νπ·e^{5π²ν} (cos(π/2) = 0 in the denominator)
        assert!(burgers_analytical(1.0, 0.0).abs() < 1e-15);
        let e = (5.0 * std::f64::consts::PI.powi(2) * 0.01).exp();
        let expect = 0.01 * std::f64::consts::PI * e;
        assert!((burgers_analytical(0.5, 0.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn ks_initial_condition_values() {
        assert!(ks_initial(25.0).abs() < 1e-15); // cos(5π) + sech(0) = −1 + 1
        assert!((ks_initial(0.0) - (1.0 + sech(5.0))).abs() < 1e-15);
        assert!((ks_initial(50.0) - (1.0 + sech(5.0))).abs() < 1e-15);
    }

    #[test]
    fn control_field_interpolates_nodes_exactly_and_wraps() {
        let n = 40;
        let l = 4.0;
        let vals: Vec<f64> = (0..n)
            .map(|j| (2.0 * std::f64::consts::PI * j as f64 / n as f64).sin())
            .collect();
        let c = ControlField::new_1d(ControlKind::InitialCondition, l, vals.clone()).unwrap();
        for j in 0..n {
            let x = j as f64 * l / n as f64;
            assert!((c.eval(x) - vals[j]).abs() < 1e-14);
            assert!((c.eval(x + l) - c.eval(x)).abs() < 1e-12);
            assert!((c.eval(x - l) - c.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn control_field_cubic_converges_at_third_order() {
        let l = 4.0;
        let f = |x: f64| (2.0 * std::f64::consts::PI * x / l).sin();
        let err = |n: usize| {
            let vals: Vec<f64> = (0..n).map(|j| f(j as f64 * l / n as f64)).collect();
            let c = ControlField::new_1d(ControlKind::InitialCondition, l, vals).unwrap();
            (0..1000)
                .map(|i| {
                    let x = i as f64 * l / 1000.0;
                    (c.eval(x) - f(x)).abs()
                })
                .fold(0.0f64, f64::max)
        };
        let (e40, e80) = (err(40), err(80));
        assert!(e40 < 1e-3, "coarse error {e40}");
        assert!(e40 / e80 > 5.0, "convergence ratio {}", e40 / e80);
    }

    #[test]
    fn forcing_field_is_bilinear_with_clamped_time() {
        let l = 50.0;
        let nx = 10;
        let ts = vec![0.0, 1.0, 2.0];
        // f(x,t) = t everywhere: values depend only on the time row
        let mut values = vec![0.0; 3 * nx];
        for (i, &t) in ts.iter().enumerate() {
            for j in 0..nx {
                values[i * nx + j] = t;
            }
        }
        let c = ControlField::new_forcing(l, nx, ts, values).unwrap();
        assert!((c.eval_xt(7.3, 0.5) - 0.5).abs() < 1e-14);
        assert!((c.eval_xt(49.0, 1.25) - 1.25).abs() < 1e-14);
        assert!((c.eval_xt(3.0, -1.0) - 0.0).abs() < 1e-14); // clamped below
        assert!((c.eval_xt(3.0, 9.0) - 2.0).abs() < 1e-14); // clamped above
        // wraps in x
        assert!((c.eval_xt(l + 7.3, 0.5) - c.eval_xt(7.3, 0.5)).abs() < 1e-14);
    }

    #[test]
    fn control_text_format_round_trips_byte_identically() {
        let dir = std::env::temp_dir().join("pdeopt-control-test");
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<f64> = (0..17).map(|_| rng.gen::<f64>() * 3.0 - 1.5).collect();
        let c = ControlField::new_1d(ControlKind::BoundaryFunction, 1.0, vals).unwrap();
        let p1 = dir.join("c1.txt");
        let p2 = dir.join("c2.txt");
        c.write_text(&p1).unwrap();
        let c2 = ControlField::read_text(&p1).unwrap();
        assert_eq!(c, c2);
        c2.write_text(&p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "re-saved control file must be byte-identical"
        );

        let f = ControlField::new_forcing(
            50.0,
            4,
            vec![0.0, 5.0, 10.0],
            (0..12).map(|i| i as f64 * 0.37 - 1.0).collect(),
        )
        .unwrap();
        let p3 = dir.join("f1.txt");
        f.write_text(&p3).unwrap();
        assert_eq!(f, ControlField::read_text(&p3).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn control_text_format_rejects_corruption() {
        let dir = std::env::temp_dir().join("pdeopt-control-bad");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.txt");
        std::fs::write(&p, "not a control file\n").unwrap();
        assert!(ControlField::read_text(&p).is_err());
        std::fs::write(
            &p,
            "pdeopt-control v1\nkind initial\nperiod 4.0e0\nnx 4\nnt 0\nvalues\n1.0\n2.0\n",
        )
        .unwrap();
        assert!(ControlField::read_text(&p).is_err(), "truncated values");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn default_sampling_counts_match_reference_settings() {
        assert_eq!(burgers().default_sampling(0).n_r, 20_000);
        assert_eq!(ks_control().default_sampling(0).n_r, 80_000);
        assert_eq!(ks_control().default_sampling(0).m, 20);
        let lp = laplace_control().default_sampling(0);
        assert_eq!(lp.n_j, 41);
        assert_eq!(laplace_forward().default_sampling(0).n_r, 10_000);
    }
}
