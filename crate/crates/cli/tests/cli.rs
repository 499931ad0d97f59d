//! End-to-end tests of the `pdeopt` binary: tiny training/descent runs that
//! exercise config layering, artifact persistence, manifest reproduction,
//! the interchange format, export, and the exit-code contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdeopt"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("pdeopt_cli_tests")
        .join(format!("{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

fn summary_value<'a>(summary: &'a str, key: &str) -> &'a str {
    summary
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == key).then_some(v.trim())
        })
        .unwrap_or_else(|| panic!("summary lacks key '{key}':\n{summary}"))
}

fn assert_status(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Shared tiny control run; several tests reuse its artifacts.
fn tiny_control_run(out_dir: &Path, extra: &[&str]) -> Output {
    bin()
        .args([
            "control",
            "--problem",
            "burgers-ctl",
            "--seed",
            "9",
            "--out",
            out_dir.to_str().unwrap(),
            "--set",
            "pinn.epochs=3",
            "--set",
            "pinn.lr_schedule=0:1e-3",
            "--set",
            "sampling.n_r=200",
            "--set",
            "sampling.m=2",
            "--set",
            "pinn.control_samples=64",
        ])
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn control_run_writes_artifacts_and_manifest_reruns_bit_identically() {
    let root = tmp("rerun");
    let a = root.join("a");
    let out = tiny_control_run(&a, &[]);
    assert_status(&out, 0);
    for file in ["manifest.txt", "history.csv", "control.txt", "summary.txt"] {
        assert!(a.join(file).is_file(), "missing {file}");
    }
    assert!(a.join("checkpoints").join("u_final.json").is_file());
    assert!(a.join("checkpoints").join("c_final.json").is_file());

    let manifest = read(&a.join("manifest.txt"));
    assert!(manifest.contains("pinn.epochs = 3"));
    assert!(manifest.contains("run.problem = burgers-ctl"));
    assert!(manifest.contains("run.seed = 9"));

    // Re-running from the manifest must reproduce the summary numbers to the
    // last bit (17-significant-digit text equality).
    let b = root.join("b");
    let out = bin()
        .args([
            "control",
            "--config",
            a.join("manifest.txt").to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_status(&out, 0);
    let sa = read(&a.join("summary.txt"));
    let sb = read(&b.join("summary.txt"));
    for key in ["final_total_loss", "j_pinn", "j_hifi", "baseline_hifi"] {
        assert_eq!(
            summary_value(&sa, key),
            summary_value(&sb, key),
            "summary key {key} differs between original and manifest re-run"
        );
    }
    // And the exported control is byte-identical.
    assert_eq!(read(&a.join("control.txt")), read(&b.join("control.txt")));
}

#[test]
fn evaluate_round_trips_the_exported_control_through_the_interchange_format() {
    let root = tmp("evaluate");
    let a = root.join("run");
    assert_status(&tiny_control_run(&a, &[]), 0);
    let sa = read(&a.join("summary.txt"));

    let e = root.join("eval");
    let out = bin()
        .args([
            "evaluate",
            "--problem",
            "burgers-ctl",
            "--control",
            a.join("control.txt").to_str().unwrap(),
            "--out",
            e.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_status(&out, 0);
    let se = read(&e.join("summary.txt"));
    assert_eq!(
        summary_value(&sa, "j_hifi"),
        summary_value(&se, "j_hifi"),
        "evaluating the exported control must reproduce the run's cost bit-for-bit"
    );
    assert_eq!(
        summary_value(&sa, "baseline_hifi"),
        summary_value(&se, "baseline_hifi")
    );
}

#[test]
fn evaluate_without_a_control_reports_the_baseline() {
    let e = tmp("baseline");
    let out = bin()
        .args([
            "evaluate",
            "--problem",
            "burgers-ctl",
            "--out",
            e.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_status(&out, 0);
    let s = read(&e.join("summary.txt"));
    assert_eq!(summary_value(&s, "j_hifi"), summary_value(&s, "baseline_hifi"));
    assert!(summary_value(&s, "reduction_factor").starts_with("1.0000000000000000"));
}

#[test]
fn export_emits_loss_control_and_field_csvs() {
    let root = tmp("export");
    let a = root.join("run");
    assert_status(&tiny_control_run(&a, &[]), 0);
    let out = bin()
        .args(["export", "--run", a.to_str().unwrap()])
        .output()
        .unwrap();
    assert_status(&out, 0);
    let export = a.join("export");
    let loss = read(&export.join("loss_curves.csv"));
    assert!(loss.starts_with("epoch,"));
    assert_eq!(loss.lines().count(), 4, "3 epochs + header");
    let profile = read(&export.join("control_profile.csv"));
    assert_eq!(profile.lines().next().unwrap(), "x,value");
    assert_eq!(profile.lines().count(), 65, "64 samples + header");
    let field = read(&export.join("field_snapshot.csv"));
    assert_eq!(field.lines().next().unwrap(), "x,t,u");

    let empty = root.join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = bin()
        .args(["export", "--run", empty.to_str().unwrap()])
        .output()
        .unwrap();
    assert_status(&out, 1);
}

#[test]
fn dal_runs_write_history_and_control_artifacts() {
    let d = tmp("dal");
    let out = bin()
        .args([
            "dal",
            "--problem",
            "laplace-ctl",
            "--iters",
            "3",
            "--out",
            d.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_status(&out, 0);
    let history = read(&d.join("history.csv"));
    assert!(history.starts_with("iteration,J,grad_norm"));
    assert!(d.join("control.txt").is_file());
    let s = read(&d.join("summary.txt"));
    let j: f64 = summary_value(&s, "j_hifi").parse().unwrap();
    let b: f64 = summary_value(&s, "baseline_hifi").parse().unwrap();
    assert!(j < b, "three descent iterations must beat the zero control");
}

#[test]
fn numerical_blowup_exits_2_with_an_error_record() {
    let d = tmp("blowup");
    let out = bin()
        .args([
            "dal",
            "--problem",
            "burgers-ctl",
            "--beta",
            "1e8",
            "--iters",
            "10",
            "--out",
            d.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_status(&out, 2);
    let record = read(&d.join("error.txt"));
    assert!(record.contains("status = failed"));
    assert!(record.contains("message = "));
}

#[test]
fn usage_errors_exit_1() {
    // Unknown problem.
    let out = bin()
        .args(["forward", "--problem", "heat-1d"])
        .output()
        .unwrap();
    assert_status(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown problem"));

    // Unknown config key, named with its line.
    let dir = tmp("badcfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "pinn.epochs = 3\npinn.epoch = 5\n").unwrap();
    let out = bin()
        .args([
            "control",
            "--problem",
            "burgers-ctl",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_status(&out, 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2:") && err.contains("pinn.epoch"), "{err}");

    // Malformed numeric flag value.
    let out = bin()
        .args([
            "control",
            "--problem",
            "burgers-ctl",
            "--set",
            "pinn.epochs=banana",
            "--out",
            dir.join("out2").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_status(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pinn.epochs"));

    // Forward on a control problem without a frozen control.
    let out = bin()
        .args([
            "forward",
            "--problem",
            "ks-ctl",
            "--out",
            dir.join("out3").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_status(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--control"));
}

#[test]
fn flag_overrides_beat_config_file_values() {
    let dir = tmp("precedence");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "pinn.epochs = 2\nsampling.n_r = 200\nsampling.m = 2\npinn.lr_schedule = 0:1e-3\npinn.control_samples = 64\n").unwrap();
    let out_dir = dir.join("out");
    let out = bin()
        .args([
            "control",
            "--problem",
            "burgers-ctl",
            "--config",
            cfg.to_str().unwrap(),
            "--epochs",
            "4",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_status(&out, 0);
    assert!(read(&out_dir.join("manifest.txt")).contains("pinn.epochs = 4"));
    let history = read(&out_dir.join("history.csv"));
    assert_eq!(history.lines().count(), 5, "4 epochs + header");
}
