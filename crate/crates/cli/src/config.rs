//! Layered key=value configuration.
//!
//! Every run resolves its settings in three layers: built-in per-problem
//! defaults, then an optional config file, then command-line overrides. The
//! file format is flat `section.key = value` text — `#` starts a comment,
//! blank lines are ignored, and any key that is not part of the selected
//! engine's default set is rejected with its line number, so typos never
//! silently fall back to defaults.
//!
//! The resolved layer set is also what gets written back out as a run's
//! manifest: re-parsing a manifest reproduces the run exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use pdeopt_core::pinn::TrainConfig;
use pdeopt_core::problems::{ProblemId, ProblemSpec};

use crate::CliError;

/// Which pipeline a run drives; decides the default key set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Forward,
    Control,
    LineSearch,
    Dal,
    Evaluate,
    CheckGradients,
}

impl Engine {
    pub fn tag(self) -> &'static str {
        match self {
            Engine::Forward => "forward",
            Engine::Control => "control",
            Engine::LineSearch => "linesearch",
            Engine::Dal => "dal",
            Engine::Evaluate => "evaluate",
            Engine::CheckGradients => "check-gradients",
        }
    }
}

/// Where a resolved value came from (kept for ordering guarantees: defaults
/// lose to file values, file values lose to flags).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Layer {
    Default,
    File,
    Flag,
}

/// The resolved configuration: a flat string map plus typed getters.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    values: BTreeMap<String, (String, Layer)>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl ResolvedConfig {
    /// Built-in defaults for one problem/engine pair. The key set fixed here
    /// is exhaustive: parsing rejects everything outside it.
    pub fn defaults(problem: &ProblemSpec, engine: Engine) -> Self {
        let mut v: BTreeMap<String, (String, Layer)> = BTreeMap::new();
        let mut put = |k: &str, val: String| {
            v.insert(k.to_string(), (val, Layer::Default));
        };
        put("run.problem", problem.name.to_string());
        put("run.engine", engine.tag().to_string());
        put("run.seed", "1".into());
        put("run.out", String::new());
        put("run.deterministic", "true".into());
        put("run.workers", "1".into());
        put("hifi.burgers_n", "256".into());
        // Gradient verification needs the finer Burgers step: the discrete
        // adjoint is consistent with the forward scheme but not its exact
        // transpose, so the agreement floor scales with dt.
        let burgers_dt = if engine == Engine::CheckGradients { "1e-4" } else { "1e-3" };
        put("hifi.burgers_dt", burgers_dt.into());
        put("hifi.ks_n", "128".into());
        put("hifi.ks_dt", "1e-3".into());
        put("hifi.laplace_n", "40".into());

        let uses_pinn = matches!(engine, Engine::Forward | Engine::Control | Engine::LineSearch);
        if uses_pinn {
            let t = TrainConfig::defaults_for(problem);
            let plan = problem.default_sampling(0);
            put("pinn.arch_u", join_usize(&t.arch_u));
            put(
                "pinn.arch_c",
                t.arch_c.as_ref().map_or_else(|| "none".into(), |a| join_usize(a)),
            );
            put("pinn.epochs", t.epochs.to_string());
            put("pinn.lr_schedule", join_schedule(&t.lr_schedule));
            put("pinn.w_r", "1".into());
            put("pinn.w_b", "1".into());
            put("pinn.w_0", "1".into());
            put("pinn.checkpoint_every", t.checkpoint_every.to_string());
            put("sampling.n_r", plan.n_r.to_string());
            put("sampling.m", plan.m.to_string());
        }
        if matches!(engine, Engine::Control | Engine::LineSearch) {
            // Reference cost weights established per problem by re-evaluated
            // sweeps; the line-search engine only uses this as a fallback.
            let w_j = match problem.id {
                ProblemId::LaplaceCtl => "1e2",
                ProblemId::BurgersCtl => "1",
                ProblemId::KsCtl => "1e-3",
                _ => "1",
            };
            put("pinn.w_j", w_j.into());
        }
        if engine == Engine::Control {
            let samples = match problem.id {
                ProblemId::KsCtl => 128,
                _ => 256,
            };
            put("pinn.control_samples", samples.to_string());
        }
        if engine == Engine::Forward {
            put("forward.control", String::new());
        }
        if engine == Engine::LineSearch {
            let (grid, samples) = match problem.id {
                ProblemId::LaplaceCtl => (log_grid(1e-3, 1e7, 11), 256),
                ProblemId::KsCtl => (log_grid(1e-8, 10.0, 10), 128),
                _ => (log_grid(1e-3, 1e6, 10), 256),
            };
            put("linesearch.grid", grid);
            put("linesearch.samples", samples.to_string());
            let twin = forward_twin(problem);
            let ft = TrainConfig::defaults_for(&twin);
            put("linesearch.fwd_epochs", ft.epochs.to_string());
            put("linesearch.fwd_arch", join_usize(&ft.arch_u));
            put("linesearch.fwd_lr_schedule", join_schedule(&ft.lr_schedule));
        }
        if engine == Engine::Dal {
            if let Ok(d) = pdeopt_core::adjoint::DalConfig::defaults_for(problem) {
                put("dal.beta", trim_float(d.beta));
                put("dal.max_iters", d.max_iters.to_string());
                put("dal.plateau_tol", trim_float(d.plateau_tol));
                put("dal.plateau_window", d.plateau_window.to_string());
                put("dal.grad_floor", trim_float(d.grad_floor));
                put("dal.ks_export_stride", d.ks_export_stride.to_string());
                put("dal.initial", String::new());
            }
        }
        if engine == Engine::Evaluate {
            put("evaluate.control", String::new());
        }
        if engine == Engine::CheckGradients {
            put("check.directions", "10".into());
            put("check.eps", "1e-4".into());
            let tol = match problem.id {
                ProblemId::BurgersCtl => "1e-3",
                _ => "1e-2",
            };
            put("check.tol", tol.into());
        }
        ResolvedConfig { values: v }
    }

    /// Layers a config file on top of the defaults. Unknown keys, duplicate
    /// junk, and syntax problems all error with the offending line number.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config '{}': {e}", path.display())))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!(
                    "{}:{}: expected 'key = value', got '{}'",
                    path.display(),
                    idx + 1,
                    raw.trim()
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !self.values.contains_key(key) {
                return Err(usage(format!(
                    "{}:{}: unknown key '{}' for engine '{}'",
                    path.display(),
                    idx + 1,
                    key,
                    self.get_str("run.engine")
                )));
            }
            // run.problem/run.engine in a manifest must agree with the
            // command line; anything else would silently run something other
            // than what was asked for.
            if key == "run.problem" || key == "run.engine" {
                let current = self.get_str(key);
                if current != value {
                    return Err(usage(format!(
                        "{}:{}: config sets {key}={value} but the command line selected '{current}'",
                        path.display(),
                        idx + 1,
                    )));
                }
                continue;
            }
            self.values
                .insert(key.to_string(), (value.to_string(), Layer::File));
        }
        Ok(())
    }

    /// Layers command-line `key=value` overrides on top of file and defaults.
    pub fn apply_overrides(&mut self, pairs: &[(String, String)]) -> Result<(), CliError> {
        for (key, value) in pairs {
            if !self.values.contains_key(key.as_str()) {
                return Err(usage(format!(
                    "unknown key '{}' for engine '{}'",
                    key,
                    self.get_str("run.engine")
                )));
            }
            self.values
                .insert(key.clone(), (value.clone(), Layer::Flag));
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(|(v, _)| v.as_str())
            .unwrap_or_default()
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, CliError> {
        let raw = self.get_str(key);
        raw.parse::<f64>()
            .map_err(|_| usage(format!("key '{key}': expected a number, got '{raw}'")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, CliError> {
        let raw = self.get_str(key);
        raw.parse::<usize>()
            .map_err(|_| usage(format!("key '{key}': expected a non-negative integer, got '{raw}'")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, CliError> {
        let raw = self.get_str(key);
        raw.parse::<u64>()
            .map_err(|_| usage(format!("key '{key}': expected a non-negative integer, got '{raw}'")))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool, CliError> {
        match self.get_str(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            raw => Err(usage(format!("key '{key}': expected true/false, got '{raw}'"))),
        }
    }

    /// Comma-separated layer sizes, e.g. `2,50,50,1`; `none` is allowed and
    /// yields `None`.
    pub fn get_arch(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        let raw = self.get_str(key);
        if raw == "none" || raw.is_empty() {
            return Ok(None);
        }
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| usage(format!("key '{key}': bad layer size '{p}'")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Comma-separated positive numbers, e.g. the cost-weight grid.
    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let raw = self.get_str(key);
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("key '{key}': bad number '{p}'")))
            })
            .collect()
    }

    /// Learning-rate schedule `epoch:rate` pairs, e.g. `0:1e-3,20000:1e-4`.
    pub fn get_schedule(&self, key: &str) -> Result<Vec<(usize, f64)>, CliError> {
        let raw = self.get_str(key);
        raw.split(',')
            .map(|pair| {
                let (e, r) = pair
                    .split_once(':')
                    .ok_or_else(|| usage(format!("key '{key}': expected epoch:rate, got '{pair}'")))?;
                let epoch = e.trim().parse::<usize>().map_err(|_| {
                    usage(format!("key '{key}': bad epoch '{e}' in '{pair}'"))
                })?;
                let rate = r.trim().parse::<f64>().map_err(|_| {
                    usage(format!("key '{key}': bad rate '{r}' in '{pair}'"))
                })?;
                Ok((epoch, rate))
            })
            .collect()
    }

    /// Serializes the resolved configuration as a manifest. Header comments
    /// carry versions and the derived per-subsystem seeds; the key=value body
    /// re-parses into the identical configuration.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# pdeopt run manifest");
        let _ = writeln!(s, "# version.pdeopt = {}", env!("CARGO_PKG_VERSION"));
        if let Ok(root) = self.get_u64("run.seed") {
            let _ = writeln!(
                s,
                "# derived seeds: sampling={} init_u={} init_c={} shuffle={} check={}",
                subsystem_seed(root, SEED_SAMPLING),
                subsystem_seed(root, SEED_INIT_U),
                subsystem_seed(root, SEED_INIT_C),
                subsystem_seed(root, SEED_SHUFFLE),
                subsystem_seed(root, SEED_CHECK),
            );
        }
        for (k, (v, _)) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Subsystem indices of the seed-splitting scheme: every random stream in a
/// run is seeded by `subsystem_seed(run.seed, INDEX)`.
pub const SEED_SAMPLING: u64 = 1;
pub const SEED_INIT_U: u64 = 2;
pub const SEED_INIT_C: u64 = 3;
pub const SEED_SHUFFLE: u64 = 4;
pub const SEED_CHECK: u64 = 5;

/// Splits the root seed into independent per-subsystem seeds with one
/// SplitMix64 scramble: `mix(root * golden + index)`.
pub fn subsystem_seed(root: u64, index: u64) -> u64 {
    let mut z = root
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The forward-problem twin used for line-search re-evaluation budgets.
pub fn forward_twin(problem: &ProblemSpec) -> ProblemSpec {
    match problem.id {
        ProblemId::LaplaceCtl => pdeopt_core::problems::laplace_forward(),
        ProblemId::BurgersCtl => pdeopt_core::problems::burgers(),
        ProblemId::KsCtl => pdeopt_core::problems::ks(),
        _ => problem.clone(),
    }
}

fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn join_schedule(s: &[(usize, f64)]) -> String {
    s.iter()
        .map(|(e, r)| format!("{e}:{}", trim_float(*r)))
        .collect::<Vec<_>>()
        .join(",")
}

/// Shortest exact decimal for a float (manifests stay diff-friendly).
pub fn trim_float(x: f64) -> String {
    let s = format!("{x}");
    if s.parse::<f64>() == Ok(x) {
        s
    } else {
        format!("{x:.17e}")
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> String {
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            trim_float(10f64.powf(lo.log10() * (1.0 - t) + hi.log10() * t))
        })
        .collect::<Vec<_>>()
        .join(",")
}
