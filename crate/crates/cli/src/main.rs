use std::path::PathBuf;
use std::process::ExitCode;

use boundary_cli::error::{CliError, CliResult};
use boundary_cli::output::{json_bytes, out_dir};
use boundary_cli::report::report;
use boundary_cli::scenario::{
    catalogue_table, load, CatalogueConfig, CommandKind, Scenario, DEFAULT_SEED,
};
use boundary_cli::{execute, output::to_json};
use boundary_core::catalogue::{catalogue, catalogue_row, CatalogueParams, HorizonInput};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "boundary",
    version,
    about = "Capability-boundary calculators and simulators"
)]
struct Cli {
    /// Worker threads for simulations (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the sixteen-row catalogue.
    Catalogue {
        /// Only this row.
        #[arg(long)]
        spec: Option<u8>,
        /// Layers, for the horizon row.
        #[arg(long = "L", requires = "width")]
        layers: Option<u32>,
        /// Width, for the horizon row.
        #[arg(long = "d", requires = "layers")]
        width: Option<u32>,
        /// Task depth compared against the horizon.
        #[arg(long)]
        depth: Option<f64>,
        /// Evaluate every row at the reference parameters.
        #[arg(long)]
        reference: bool,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    Horizon(Common),
    Chain(Common),
    Stop(Common),
    Adapt(Common),
    Ground(Common),
    Trust(Common),
    Compose(Common),
    /// Run a TOML scenario or replay a JSON manifest.
    Run {
        path: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-check the comparisons saved in a results directory.
    Report {
        dir: PathBuf,
    },
}

fn catalogue_cmd(
    spec: Option<u8>,
    layers: Option<u32>,
    width: Option<u32>,
    depth: Option<f64>,
    reference: bool,
    json: bool,
    config: Option<PathBuf>,
) -> CliResult<()> {
    let mut params = match (&config, reference) {
        (Some(_), true) => {
            return Err(CliError::Config(
                "give either --config or --reference".into(),
            ))
        }
        (Some(p), false) => match load(p, Some(CommandKind::Catalogue))?.scenario {
            Scenario::Catalogue(CatalogueConfig(c)) => c,
            _ => unreachable!("loader returns the requested kind"),
        },
        (None, true) => CatalogueParams::reference(),
        (None, false) => CatalogueParams::default(),
    };
    if let (Some(l), Some(d)) = (layers, width) {
        params.horizon = Some(HorizonInput {
            layers: l,
            width: d,
            depth: params.horizon.and_then(|h| h.depth),
        });
    }
    if let Some(x) = depth {
        let h = params
            .horizon
            .as_mut()
            .ok_or_else(|| CliError::Config("--depth needs --L and --d".into()))?;
        h.depth = Some(x);
    }
    let rows = match spec {
        Some(id) => vec![catalogue_row(id, &params)?],
        None => catalogue(&params)?,
    };
    if json {
        print!("{}", String::from_utf8_lossy(&json_bytes(&to_json(&rows)?)));
    } else {
        print!("{}", catalogue_table(&rows));
    }
    Ok(())
}

fn run_scenario(scenario: Scenario, seed: u64) -> CliResult<()> {
    let dir = out_dir();
    let (summary, written) = execute(&scenario, seed, &dir)?;
    print!("{}", String::from_utf8_lossy(&json_bytes(&summary)));
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main_inner(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let kind_cmd = |kind: CommandKind, c: Common| -> CliResult<()> {
        let (scenario, file_seed) = match &c.config {
            Some(p) => {
                let l = load(p, Some(kind))?;
                (l.scenario, l.seed)
            }
            None => (Scenario::default_for(kind), None),
        };
        run_scenario(scenario, c.seed.or(file_seed).unwrap_or(DEFAULT_SEED))
    };
    match cli.cmd {
        Cmd::Catalogue {
            spec,
            layers,
            width,
            depth,
            reference,
            json,
            config,
        } => catalogue_cmd(spec, layers, width, depth, reference, json, config),
        Cmd::Horizon(c) => kind_cmd(CommandKind::Horizon, c),
        Cmd::Chain(c) => kind_cmd(CommandKind::Chain, c),
        Cmd::Stop(c) => kind_cmd(CommandKind::Stop, c),
        Cmd::Adapt(c) => kind_cmd(CommandKind::Adapt, c),
        Cmd::Ground(c) => kind_cmd(CommandKind::Ground, c),
        Cmd::Trust(c) => kind_cmd(CommandKind::Trust, c),
        Cmd::Compose(c) => kind_cmd(CommandKind::Compose, c),
        Cmd::Run { path, seed } => {
            let l = load(&path, None)?;
            run_scenario(l.scenario, seed.or(l.seed).unwrap_or(DEFAULT_SEED))
        }
        Cmd::Report { dir } => {
            let (text, failed) = report(&dir)?;
            print!("{text}");
            if failed > 0 {
                return Err(CliError::Failures(failed));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
