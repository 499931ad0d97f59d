//! Plot-data emission: turns a finished run directory into tidy CSV files
//! (loss curves, control profiles, uniform-grid field snapshots with
//! pointwise reference errors where a closed-form reference exists).

use std::path::{Path, PathBuf};

use pdeopt_core::network::load_checkpoint;
use pdeopt_core::problems::{
    burgers_analytical, laplace_forward_solution, ControlKind, ProblemId, ProblemSpec,
};

use crate::controlio;
use crate::runs::problem_by_name;
use crate::CliError;

/// Emits every plot CSV the run directory supports. Errors when the
/// directory contains nothing exportable.
pub fn run_export(run_dir: &Path, out_dir: Option<&Path>) -> Result<(), CliError> {
    let out: PathBuf = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("export"));
    let problem = problem_from_manifest(run_dir)?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Run(format!("cannot create '{}': {e}", out.display())))?;
    let mut exported: Vec<String> = Vec::new();

    let history = run_dir.join("history.csv");
    if history.is_file() {
        std::fs::copy(&history, out.join("loss_curves.csv"))
            .map_err(|e| CliError::Run(format!("cannot copy history: {e}")))?;
        exported.push("loss_curves.csv".into());
    }

    let control = run_dir.join("control.txt");
    if control.is_file() {
        write_control_profile(&control, &out)?;
        exported.push("control_profile.csv".into());
    }

    let checkpoint = run_dir.join("checkpoints").join("u_final.json");
    if checkpoint.is_file() {
        write_field_snapshot(&problem, &checkpoint, &out)?;
        exported.push("field_snapshot.csv".into());
    }

    if exported.is_empty() {
        return Err(CliError::Usage(format!(
            "'{}' contains no exportable artifacts (expected history.csv, control.txt, or \
             checkpoints/u_final.json)",
            run_dir.display()
        )));
    }
    println!("exported {} -> {}", exported.join(", "), out.display());
    Ok(())
}

/// Reads `run.problem` out of the run's manifest.
fn problem_from_manifest(run_dir: &Path) -> Result<ProblemSpec, CliError> {
    let manifest = run_dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest).map_err(|_| {
        CliError::Usage(format!(
            "'{}' is not a run directory (no readable manifest.txt)",
            run_dir.display()
        ))
    })?;
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == "run.problem" {
                return problem_by_name(v.trim());
            }
        }
    }
    Err(CliError::Usage(format!(
        "manifest '{}' names no run.problem",
        manifest.display()
    )))
}

fn write_csv(path: &Path, content: String) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Run(format!("cannot write '{}': {e}", path.display())))
}

/// Control profile: `x,value` rows for 1-D controls, `x,t,value` rows for
/// space-time forcings.
fn write_control_profile(control: &Path, out: &Path) -> Result<(), CliError> {
    let field = controlio::read_control(control)?;
    let h = field.period / field.nx as f64;
    let mut s = String::new();
    match field.kind {
        ControlKind::SpaceTimeForcing => {
            s.push_str("x,t,value\n");
            for (row, t) in field.ts.iter().enumerate() {
                for i in 0..field.nx {
                    s.push_str(&format!(
                        "{:.10e},{:.10e},{:.10e}\n",
                        i as f64 * h,
                        t,
                        field.values[row * field.nx + i]
                    ));
                }
            }
        }
        _ => {
            s.push_str("x,value\n");
            for (i, v) in field.values.iter().enumerate() {
                s.push_str(&format!("{:.10e},{:.10e}\n", i as f64 * h, v));
            }
        }
    }
    write_csv(&out.join("control_profile.csv"), s)
}

/// Field snapshot on a uniform grid; adds reference and absolute-error
/// columns where the problem has a closed-form solution.
fn write_field_snapshot(
    problem: &ProblemSpec,
    checkpoint: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let net = load_checkpoint(checkpoint)
        .map_err(|e| CliError::Run(format!("cannot load checkpoint: {e}")))?;
    let (n0, n1, second_axis) = match problem.id {
        ProblemId::LaplaceFwd | ProblemId::LaplaceCtl => (100, 100, "y"),
        ProblemId::KsFwd | ProblemId::KsCtl => (128, 101, "t"),
        _ => (256, 101, "t"),
    };
    let reference: Option<fn(f64, f64) -> f64> = match problem.id {
        ProblemId::LaplaceFwd => Some(laplace_forward_solution),
        ProblemId::BurgersFwd => Some(burgers_analytical),
        _ => None,
    };
    let mut s = if reference.is_some() {
        format!("x,{second_axis},u,u_ref,abs_err\n")
    } else {
        format!("x,{second_axis},u\n")
    };
    for j in 0..n1 {
        let b = problem.lo[1] + (problem.hi[1] - problem.lo[1]) * j as f64 / (n1 - 1) as f64;
        for i in 0..n0 {
            let a = problem.lo[0] + (problem.hi[0] - problem.lo[0]) * i as f64 / (n0 - 1) as f64;
            let u = net.forward(&[a, b]);
            match reference {
                Some(r) => {
                    let ur = r(a, b);
                    s.push_str(&format!(
                        "{a:.10e},{b:.10e},{u:.10e},{ur:.10e},{:.10e}\n",
                        (u - ur).abs()
                    ));
                }
                None => s.push_str(&format!("{a:.10e},{b:.10e},{u:.10e}\n")),
            }
        }
    }
    write_csv(&out.join("field_snapshot.csv"), s)
}
