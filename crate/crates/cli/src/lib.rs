//! Config-driven frontend over `boundary_core`: scenario runs, CSV/JSON
//! emission with replay manifests, and a pass/fail report over results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod output;
pub mod report;
pub mod scenario;

use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::CliResult;
use crate::output::write_outputs;
use crate::scenario::Scenario;

/// Run a scenario and write its outputs under `dir`.
pub fn execute(scenario: &Scenario, seed: u64, dir: &Path) -> CliResult<(Value, Vec<PathBuf>)> {
    let art = scenario.run(seed)?;
    let written = write_outputs(dir, scenario.kind(), scenario.params()?, seed, &art)?;
    Ok((art.summary, written))
}
