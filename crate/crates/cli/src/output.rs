//! Number formatting, CSV/JSON emission and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::scenario::CommandKind;

/// Environment variable naming the output directory.
pub const OUT_DIR_VAR: &str = "BOUNDARY_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "boundary-out";

pub fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_VAR)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Shortest text for `x` after rounding to 12 significant digits.
pub fn num(x: f64) -> String {
    let r = round12(x);
    if r == 0.0 {
        return "0".to_string();
    }
    if !r.is_finite() {
        return r.to_string();
    }
    if (1e-5..1e15).contains(&r.abs()) {
        r.to_string()
    } else {
        format!("{r:e}")
    }
}

pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round12(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

pub fn to_json<T: Serialize>(x: &T) -> CliResult<Value> {
    serde_json::to_value(x).map_err(|e| CliError::Config(format!("serialization failed: {e}")))
}

/// Pretty JSON with every float rounded, newline terminated.
pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(&round_json(v.clone())).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

pub struct Csv {
    w: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Csv { w }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).expect("in-memory write");
    }

    pub fn finish(self) -> Vec<u8> {
        self.w.into_inner().expect("in-memory flush")
    }
}

/// Result of one scenario: a JSON summary plus named extra files.
pub struct Artifacts {
    pub summary: Value,
    pub files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Within,
    AtMost,
    AtLeast,
}

impl CheckKind {
    pub fn holds(self, observed: f64, target: f64, tolerance: f64) -> bool {
        match self {
            CheckKind::Within => (observed - target).abs() <= tolerance,
            CheckKind::AtMost => observed <= target + tolerance,
            CheckKind::AtLeast => observed >= target - tolerance,
        }
    }
}

/// A bound-versus-simulation comparison that `report` re-evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        kind: CheckKind,
        observed: f64,
        target: f64,
        tolerance: f64,
    ) -> Self {
        Check {
            name: name.into(),
            kind,
            observed,
            target,
            tolerance,
            pass: kind.holds(observed, target, tolerance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: CommandKind,
    pub params: Value,
    pub seed: u64,
    pub version: String,
    pub timestamp: String,
    pub outputs: Vec<String>,
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Write the summary, extra files and manifest; returns the paths written.
pub fn write_outputs(
    dir: &Path,
    command: CommandKind,
    params: Value,
    seed: u64,
    art: &Artifacts,
) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let name = command.name();
    let mut outputs = vec![format!("{name}.json")];
    outputs.extend(art.files.iter().map(|(f, _)| f.clone()));

    let mut written = Vec::new();
    let summary = dir.join(&outputs[0]);
    write(&summary, &json_bytes(&art.summary))?;
    written.push(summary);
    for (f, bytes) in &art.files {
        let p = dir.join(f);
        write(&p, bytes)?;
        written.push(p);
    }
    let manifest = RunManifest {
        command,
        params,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        outputs,
    };
    let p = dir.join(format!("{name}.manifest.json"));
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&p, text.as_bytes())?;
    written.push(p);
    Ok(written)
}
