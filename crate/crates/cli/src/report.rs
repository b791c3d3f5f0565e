//! Re-evaluate saved comparisons in a results directory.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::output::{num, Check, CheckKind};
use crate::scenario::CHAIN_REL_TOL;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub source: String,
    pub name: String,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Deserialize)]
struct ChainRow {
    n: u64,
    eps: f64,
    bound: f64,
    estimate: f64,
    in_regime: bool,
}

fn chain_rows(source: &str, text: &str) -> CliResult<Vec<ReportRow>> {
    let mut rd = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rd.deserialize::<ChainRow>() {
        let r = rec.map_err(|e| CliError::Config(format!("{source}: {e}")))?;
        if !r.in_regime {
            continue;
        }
        let rel = (r.estimate - r.bound).abs() / r.bound;
        out.push(ReportRow {
            source: source.to_string(),
            name: format!("chain n={} eps={}", r.n, num(r.eps)),
            observed: rel,
            target: 0.0,
            tolerance: CHAIN_REL_TOL,
            pass: CheckKind::AtMost.holds(rel, 0.0, CHAIN_REL_TOL),
        });
    }
    Ok(out)
}

fn json_checks(source: &str, text: &str) -> CliResult<Vec<ReportRow>> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{source}: {e}")))?;
    let Some(checks) = v.get("checks") else {
        return Ok(Vec::new());
    };
    let checks: Vec<Check> = serde_json::from_value(checks.clone())
        .map_err(|e| CliError::Config(format!("{source}: bad checks: {e}")))?;
    Ok(checks
        .into_iter()
        .map(|c| ReportRow {
            source: source.to_string(),
            pass: c.kind.holds(c.observed, c.target, c.tolerance),
            name: c.name,
            observed: c.observed,
            target: c.target,
            tolerance: c.tolerance,
        })
        .collect())
}

/// Collect every comparison found under `dir`, sorted by file name.
pub fn collect(dir: &Path) -> CliResult<Vec<ReportRow>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?;
    let mut names: Vec<_> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    if names.is_empty() {
        return Err(CliError::Config(format!("{} is empty", dir.display())));
    }
    names.sort();
    let mut rows = Vec::new();
    for name in names {
        let read = || {
            fs::read_to_string(dir.join(&name))
                .map_err(|e| CliError::Config(format!("cannot read {name}: {e}")))
        };
        if name == "chain_sim.csv" {
            rows.extend(chain_rows(&name, &read()?)?);
        } else if name.ends_with(".json") && !name.ends_with(".manifest.json") {
            rows.extend(json_checks(&name, &read()?)?);
        }
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!(
            "no comparisons found in {}",
            dir.display()
        )));
    }
    Ok(rows)
}

pub fn render(rows: &[ReportRow]) -> String {
    let mut s = format!(
        "{:<20} {:<50} {:>14} {:>14} {:>10}  result\n",
        "source", "check", "observed", "target", "tol"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<20} {:<50} {:>14} {:>14} {:>10}  {}\n",
            r.source,
            r.name,
            num(r.observed),
            num(r.target),
            num(r.tolerance),
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    s.push_str(&format!("{} checks, {} failed\n", rows.len(), failed));
    s
}

/// The rendered table and the number of failing rows.
pub fn report(dir: &Path) -> CliResult<(String, usize)> {
    let rows = collect(dir)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    Ok((render(&rows), failed))
}
