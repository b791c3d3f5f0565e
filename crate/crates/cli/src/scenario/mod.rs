//! Config-driven scenarios, one per simulation or calculator command.

mod adapt;
mod catalogue;
mod chain;
mod compose;
mod ground;
mod horizon;
mod stop;
mod trust;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::output::{to_json, Artifacts, RunManifest};

pub use adapt::AdaptConfig;
pub use catalogue::{catalogue_table, CatalogueConfig};
pub use chain::{ChainConfig, CHAIN_REL_TOL};
pub use compose::ComposeConfig;
pub use ground::GroundConfig;
pub use horizon::HorizonConfig;
pub use stop::StopConfig;
pub use trust::TrustConfig;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Catalogue,
    Horizon,
    Chain,
    Stop,
    Adapt,
    Ground,
    Trust,
    Compose,
}

impl CommandKind {
    pub const ALL: [CommandKind; 8] = [
        CommandKind::Catalogue,
        CommandKind::Horizon,
        CommandKind::Chain,
        CommandKind::Stop,
        CommandKind::Adapt,
        CommandKind::Ground,
        CommandKind::Trust,
        CommandKind::Compose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Catalogue => "catalogue",
            CommandKind::Horizon => "horizon",
            CommandKind::Chain => "chain",
            CommandKind::Stop => "stop",
            CommandKind::Adapt => "adapt",
            CommandKind::Ground => "ground",
            CommandKind::Trust => "trust",
            CommandKind::Compose => "compose",
        }
    }

    fn parse(s: &str) -> Option<CommandKind> {
        CommandKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Catalogue(CatalogueConfig),
    Horizon(HorizonConfig),
    Chain(ChainConfig),
    Stop(StopConfig),
    Adapt(AdaptConfig),
    Ground(GroundConfig),
    Trust(TrustConfig),
    Compose(ComposeConfig),
}

fn typed<T: DeserializeOwned>(v: toml::Value) -> CliResult<T> {
    v.try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))
}

impl Scenario {
    pub fn kind(&self) -> CommandKind {
        match self {
            Scenario::Catalogue(_) => CommandKind::Catalogue,
            Scenario::Horizon(_) => CommandKind::Horizon,
            Scenario::Chain(_) => CommandKind::Chain,
            Scenario::Stop(_) => CommandKind::Stop,
            Scenario::Adapt(_) => CommandKind::Adapt,
            Scenario::Ground(_) => CommandKind::Ground,
            Scenario::Trust(_) => CommandKind::Trust,
            Scenario::Compose(_) => CommandKind::Compose,
        }
    }

    /// Defaults for `kind`: the worked-example values.
    pub fn default_for(kind: CommandKind) -> Scenario {
        match kind {
            CommandKind::Catalogue => Scenario::Catalogue(Default::default()),
            CommandKind::Horizon => Scenario::Horizon(Default::default()),
            CommandKind::Chain => Scenario::Chain(Default::default()),
            CommandKind::Stop => Scenario::Stop(Default::default()),
            CommandKind::Adapt => Scenario::Adapt(Default::default()),
            CommandKind::Ground => Scenario::Ground(Default::default()),
            CommandKind::Trust => Scenario::Trust(Default::default()),
            CommandKind::Compose => Scenario::Compose(Default::default()),
        }
    }

    fn from_toml(kind: CommandKind, v: toml::Value) -> CliResult<Scenario> {
        Ok(match kind {
            CommandKind::Catalogue => Scenario::Catalogue(typed(v)?),
            CommandKind::Horizon => Scenario::Horizon(typed(v)?),
            CommandKind::Chain => Scenario::Chain(typed(v)?),
            CommandKind::Stop => Scenario::Stop(typed(v)?),
            CommandKind::Adapt => Scenario::Adapt(typed(v)?),
            CommandKind::Ground => Scenario::Ground(typed(v)?),
            CommandKind::Trust => Scenario::Trust(typed(v)?),
            CommandKind::Compose => Scenario::Compose(typed(v)?),
        })
    }

    fn from_json(kind: CommandKind, v: Value) -> CliResult<Scenario> {
        let de = |e: serde_json::Error| CliError::Config(e.to_string());
        Ok(match kind {
            CommandKind::Catalogue => Scenario::Catalogue(serde_json::from_value(v).map_err(de)?),
            CommandKind::Horizon => Scenario::Horizon(serde_json::from_value(v).map_err(de)?),
            CommandKind::Chain => Scenario::Chain(serde_json::from_value(v).map_err(de)?),
            CommandKind::Stop => Scenario::Stop(serde_json::from_value(v).map_err(de)?),
            CommandKind::Adapt => Scenario::Adapt(serde_json::from_value(v).map_err(de)?),
            CommandKind::Ground => Scenario::Ground(serde_json::from_value(v).map_err(de)?),
            CommandKind::Trust => Scenario::Trust(serde_json::from_value(v).map_err(de)?),
            CommandKind::Compose => Scenario::Compose(serde_json::from_value(v).map_err(de)?),
        })
    }

    /// Fully resolved parameters, as recorded in the manifest.
    pub fn params(&self) -> CliResult<Value> {
        match self {
            Scenario::Catalogue(c) => to_json(c),
            Scenario::Horizon(c) => to_json(c),
            Scenario::Chain(c) => to_json(c),
            Scenario::Stop(c) => to_json(c),
            Scenario::Adapt(c) => to_json(c),
            Scenario::Ground(c) => to_json(c),
            Scenario::Trust(c) => to_json(c),
            Scenario::Compose(c) => to_json(c),
        }
    }

    /// Replace file references with their contents so the manifest alone
    /// replays the run. Relative paths resolve against `base`.
    pub fn inline_files(&mut self, base: &Path) -> CliResult<()> {
        match self {
            Scenario::Ground(c) => c.inline_files(base),
            Scenario::Trust(c) => c.inline_files(base),
            _ => Ok(()),
        }
    }

    pub fn run(&self, seed: u64) -> CliResult<Artifacts> {
        match self {
            Scenario::Catalogue(c) => c.run(),
            Scenario::Horizon(c) => c.run(),
            Scenario::Chain(c) => c.run(seed),
            Scenario::Stop(c) => c.run(seed),
            Scenario::Adapt(c) => c.run(seed),
            Scenario::Ground(c) => c.run(seed),
            Scenario::Trust(c) => c.run(seed),
            Scenario::Compose(c) => c.run(),
        }
    }
}

/// A scenario read from disk, with the seed it carries (if any).
pub struct Loaded {
    pub scenario: Scenario,
    pub seed: Option<u64>,
}

/// Read a TOML scenario file or a JSON run manifest.
///
/// In TOML the top level may hold `command`, `seed` and one table per
/// command. `kind` selects the table; without it `command` must be set.
pub fn load(path: &Path, kind: Option<CommandKind>) -> CliResult<Loaded> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));

    if path.extension().is_some_and(|e| e == "json") {
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if kind.is_some_and(|k| k != m.command) {
            return Err(bad(format!("manifest is for `{}`", m.command.name())));
        }
        let scenario = Scenario::from_json(m.command, m.params).map_err(|e| bad(e.to_string()))?;
        return Ok(Loaded {
            scenario,
            seed: Some(m.seed),
        });
    }

    let mut table: toml::Table = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let command = match table.remove("command") {
        None => None,
        Some(toml::Value::String(s)) => {
            Some(CommandKind::parse(&s).ok_or_else(|| bad(format!("unknown command `{s}`")))?)
        }
        Some(_) => return Err(bad("`command` must be a string".into())),
    };
    let seed = match table.remove("seed") {
        None => None,
        Some(toml::Value::Integer(s)) if s >= 0 => Some(s as u64),
        Some(_) => return Err(bad("`seed` must be a non-negative integer".into())),
    };
    if let Some(k) = table.keys().find(|k| CommandKind::parse(k).is_none()) {
        return Err(bad(format!("unknown key `{k}`")));
    }
    let kind = kind
        .or(command)
        .ok_or_else(|| bad("no `command` given".into()))?;
    let mut scenario = match table.remove(kind.name()) {
        Some(v) => Scenario::from_toml(kind, v).map_err(|e| bad(e.to_string()))?,
        None => Scenario::default_for(kind),
    };
    let base = path.parent().unwrap_or(Path::new("."));
    scenario.inline_files(base)?;
    Ok(Loaded { scenario, seed })
}

/// Read a file named in a config, relative to the config's directory.
pub(crate) fn read_relative(base: &Path, p: &Path) -> CliResult<String> {
    let full = if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    };
    fs::read_to_string(&full)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", full.display())))
}
