use std::path::{Path, PathBuf};

use boundary_core::trust::{
    audit_millipede, build_millipede, osp_epsilon, run_marketplace, run_selective, welfare_loss,
    AgentModel, ExpBase, Marketplace, MillipedeOptions, Scenario, SelectiveSettings,
};
use boundary_core::{Probability, Seed};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::read_relative;
use crate::error::{CliError, CliResult};
use crate::output::{to_json, Artifacts, Check, CheckKind};

/// Selective-verification loss must match its closed form within this many
/// confidence-interval widths.
pub const SELECTIVE_CI_WIDTHS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustConfig {
    /// Marketplace TOML file, read at load time into `market`.
    pub market_file: Option<PathBuf>,
    pub market: Option<Marketplace>,
    /// Behaviour shared by every agent.
    pub agent: AgentModel,
    pub sigma_ratio_limit: Probability,
    pub max_nodes: usize,
    pub trials: u64,
    pub selective: Option<SelectiveSettings>,
    pub selective_trials: u64,
    pub welfare_eps: Probability,
    pub kappa: f64,
    pub base: ExpBase,
    pub osp_infosets: u32,
}

impl Default for TrustConfig {
    fn default() -> Self {
        let p = Probability::clamped;
        let opts = MillipedeOptions::default();
        TrustConfig {
            market_file: None,
            market: None,
            agent: AgentModel {
                eps1: p(0.0),
                prompt_shift: 0.0,
                k_star: 2,
            },
            sigma_ratio_limit: opts.sigma_ratio_limit,
            max_nodes: opts.max_nodes,
            trials: 10_000,
            selective: Some(SelectiveSettings {
                alpha: p(0.3),
                kappa: 128.0,
                base: ExpBase::Two,
                eps: p(0.16),
            }),
            selective_trials: 20_000,
            welfare_eps: p(0.16),
            kappa: 128.0,
            base: ExpBase::Two,
            osp_infosets: 1,
        }
    }
}

/// Two agents, two tasks; agent 0 pays to take task 1.
fn default_market() -> Marketplace {
    Marketplace {
        values: vec![1.0, 0.8],
        competence: vec![vec![0.9, 0.2], vec![0.5, 0.8]],
        cost: vec![vec![0.0, 0.2], vec![0.0, 0.0]],
        gaps: vec![0.0, 0.0],
        budgets: vec![1.0, 1.0],
    }
}

impl TrustConfig {
    pub fn inline_files(&mut self, base: &Path) -> CliResult<()> {
        if let Some(f) = self.market_file.take() {
            if self.market.is_some() {
                return Err(CliError::Config(
                    "give either `market_file` or `market`".into(),
                ));
            }
            let text = read_relative(base, &f)?;
            let m: Marketplace = toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {}", f.display(), e.message())))?;
            self.market = Some(m);
        }
        Ok(())
    }

    pub fn run(&self, seed: u64) -> CliResult<Artifacts> {
        if self.market_file.is_some() {
            return Err(CliError::Config(
                "market_file must be inlined before running".into(),
            ));
        }
        let market = self.market.clone().unwrap_or_else(default_market);
        let opts = MillipedeOptions {
            sigma_pi: self.agent.prompt_shift,
            sigma_ratio_limit: self.sigma_ratio_limit,
            max_nodes: self.max_nodes,
        };
        let tree = build_millipede(&market, &opts)?;
        let audit = audit_millipede(&tree, &market);
        let mut checks = vec![Check::new(
            "millipede audit issues",
            CheckKind::AtMost,
            audit.issues.len() as f64,
            0.0,
            0.0,
        )];

        let agents = vec![self.agent; market.n_agents()];
        let run = run_marketplace(&tree, &market, &agents, self.trials, Seed(seed))?;
        if self.agent.eps1.value() == 0.0 && self.agent.prompt_shift == 0.0 {
            checks.push(Check::new(
                "rational agents never reject",
                CheckKind::AtMost,
                run.violation_rate.estimate,
                0.0,
                0.0,
            ));
        }

        let selective = match &self.selective {
            None => serde_json::Value::Null,
            Some(s) => {
                let r = run_selective(&market, &tree, s, self.selective_trials, Seed(seed))?;
                checks.push(Check::new(
                    "selective loss vs closed form",
                    CheckKind::Within,
                    r.loss.estimate,
                    r.closed_form_loss,
                    SELECTIVE_CI_WIDTHS * r.loss.width(),
                ));
                to_json(&r)?
            }
        };

        let mut welfare = serde_json::Map::new();
        for (name, sc) in [
            ("no_verification", Scenario::NoVerification),
            ("no_mechanism", Scenario::NoMechanism),
            ("both", Scenario::Both),
        ] {
            let w = welfare_loss(sc, &market, self.welfare_eps, self.kappa, self.base)?;
            welfare.insert(name.into(), to_json(&w)?);
        }

        let summary = json!({
            "tree": {
                "nodes": tree.nodes.len(),
                "terminals": tree.terminals.len(),
                "order": tree.order,
                "delta_min": tree.delta_min,
                "sigma_ratio": tree.sigma_ratio,
                "greedy_allocation": tree.greedy_terminal().allocation,
            },
            "audit": to_json(&audit)?,
            "market_run": to_json(&run)?,
            "osp_epsilon": to_json(&osp_epsilon(&self.agent, self.osp_infosets, tree.delta_min.max(f64::MIN_POSITIVE))?)?,
            "selective": selective,
            "welfare_loss": welfare,
            "checks": to_json(&checks)?,
        });
        Ok(Artifacts {
            summary,
            files: vec![("mechanism_tree.txt".into(), tree.dump(&market).into_bytes())],
        })
    }
}
