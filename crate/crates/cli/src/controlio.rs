//! Text interchange format for control fields.
//!
//! A versioned, line-oriented format: a fixed first line, `key=value` header
//! lines, then a `values` marker followed by one value per line, written with
//! 17 significant digits so every f64 round-trips bit-exactly. Export →
//! import → export reproduces the file byte for byte.
//!
//! ```text
//! pdeopt-control-v1
//! kind=initial
//! period=4e0
//! nx=256
//! interpolation=linear-periodic-x-clamped-t
//! values
//! 0.0000000000000000e0
//! ...
//! ```
//!
//! Space-time forcings add `nt=<count>` and `nt` lines `t=<abscissa>` before
//! the `values` marker; values are then row-major `(nt, nx)`.

use std::path::Path;

use pdeopt_core::problems::{ControlField, ControlKind};

use crate::CliError;

const MAGIC: &str = "pdeopt-control-v1";
const INTERP: &str = "linear-periodic-x-clamped-t";

fn kind_tag(kind: ControlKind) -> &'static str {
    match kind {
        ControlKind::BoundaryFunction => "boundary",
        ControlKind::InitialCondition => "initial",
        ControlKind::SpaceTimeForcing => "forcing",
    }
}

fn kind_from_tag(tag: &str) -> Option<ControlKind> {
    match tag {
        "boundary" => Some(ControlKind::BoundaryFunction),
        "initial" => Some(ControlKind::InitialCondition),
        "forcing" => Some(ControlKind::SpaceTimeForcing),
        _ => None,
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a control field into the interchange text.
pub fn control_to_string(field: &ControlField) -> String {
    let mut s = String::new();
    s.push_str(MAGIC);
    s.push('\n');
    s.push_str(&format!("kind={}\n", kind_tag(field.kind)));
    s.push_str(&format!("period={}\n", fmt(field.period)));
    s.push_str(&format!("nx={}\n", field.nx));
    if field.kind == ControlKind::SpaceTimeForcing {
        s.push_str(&format!("nt={}\n", field.ts.len()));
        for t in &field.ts {
            s.push_str(&format!("t={}\n", fmt(*t)));
        }
    }
    s.push_str(&format!("interpolation={INTERP}\n"));
    s.push_str("values\n");
    for v in &field.values {
        s.push_str(&fmt(*v));
        s.push('\n');
    }
    s
}

/// Writes a control field to `path` in the interchange format.
pub fn write_control(field: &ControlField, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, control_to_string(field)).map_err(|e| {
        CliError::Run(format!("cannot write control '{}': {e}", path.display()))
    })
}

/// Reads a control field from the interchange format, with line-numbered
/// diagnostics for anything malformed.
pub fn read_control(path: &Path) -> Result<ControlField, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read control '{}': {e}", path.display())))?;
    let bad = |line: usize, msg: String| {
        CliError::Usage(format!("{}:{}: {msg}", path.display(), line))
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, MAGIC)) => {}
        Some((_, other)) => {
            return Err(bad(1, format!("expected header '{MAGIC}', got '{other}'")))
        }
        None => return Err(bad(1, "empty file".into())),
    }
    let mut kind = None;
    let mut period = None;
    let mut nx = None;
    let mut nt: Option<usize> = None;
    let mut ts: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut in_values = false;
    let mut last_line = 1;
    for (idx, raw) in lines {
        last_line = idx + 1;
        if in_values {
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| bad(idx + 1, format!("bad value '{raw}'")))?;
            values.push(v);
            continue;
        }
        if raw.trim() == "values" {
            in_values = true;
            continue;
        }
        let Some((key, val)) = raw.split_once('=') else {
            return Err(bad(idx + 1, format!("expected key=value, got '{raw}'")));
        };
        match key {
            "kind" => {
                kind = Some(
                    kind_from_tag(val)
                        .ok_or_else(|| bad(idx + 1, format!("unknown kind '{val}'")))?,
                )
            }
            "period" => {
                period = Some(val.parse::<f64>().map_err(|_| {
                    bad(idx + 1, format!("bad period '{val}'"))
                })?)
            }
            "nx" => {
                nx = Some(val.parse::<usize>().map_err(|_| {
                    bad(idx + 1, format!("bad nx '{val}'"))
                })?)
            }
            "nt" => {
                nt = Some(val.parse::<usize>().map_err(|_| {
                    bad(idx + 1, format!("bad nt '{val}'"))
                })?)
            }
            "t" => ts.push(val.parse::<f64>().map_err(|_| {
                bad(idx + 1, format!("bad time abscissa '{val}'"))
            })?),
            "interpolation" => {
                if val != INTERP {
                    return Err(bad(idx + 1, format!("unsupported interpolation '{val}'")));
                }
            }
            _ => return Err(bad(idx + 1, format!("unknown header key '{key}'"))),
        }
    }
    if !in_values {
        return Err(bad(last_line, "missing 'values' marker".into()));
    }
    let kind = kind.ok_or_else(|| bad(last_line, "missing 'kind'".into()))?;
    let period = period.ok_or_else(|| bad(last_line, "missing 'period'".into()))?;
    let nx = nx.ok_or_else(|| bad(last_line, "missing 'nx'".into()))?;
    let field = match kind {
        ControlKind::SpaceTimeForcing => {
            let nt = nt.ok_or_else(|| bad(last_line, "forcing needs 'nt'".into()))?;
            if ts.len() != nt {
                return Err(bad(
                    last_line,
                    format!("expected {nt} time abscissae, found {}", ts.len()),
                ));
            }
            ControlField::new_forcing(period, nx, ts, values)
        }
        k => {
            if !ts.is_empty() {
                return Err(bad(last_line, "1-D controls carry no time abscissae".into()));
            }
            ControlField::new_1d(k, period, values)
        }
    };
    field.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
