use boundary_core::chain::{
    chain_error_bound, kredundant_bound, kredundant_exact, kredundant_safe_length, optimal_k,
    safe_length, simulate_chain,
};
use boundary_core::{derive_trial_seed, Probability, Seed};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::{num, to_json, Artifacts, Check, CheckKind, Csv};

/// Relative tolerance between simulated and closed-form chain error.
pub const CHAIN_REL_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub lengths: Vec<u64>,
    pub eps: Vec<Probability>,
    pub trials: u64,
    /// Redundancy level for the majority-vote oracle column.
    pub k: u64,
    pub delta: Probability,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            lengths: vec![2, 5, 10, 15, 20],
            eps: [0.01, 0.03, 0.05, 0.1].map(Probability::clamped).to_vec(),
            trials: 100_000,
            k: 2,
            delta: Probability::clamped(0.10),
        }
    }
}

impl ChainConfig {
    pub fn run(&self, seed: u64) -> CliResult<Artifacts> {
        if self.lengths.is_empty() || self.eps.is_empty() {
            return Err(CliError::Config("lengths and eps must be non-empty".into()));
        }
        let mut csv = Csv::new(&[
            "n",
            "eps",
            "bound",
            "estimate",
            "ci_low",
            "ci_high",
            "rel_err",
            "in_regime",
            "kredundant_bound",
            "kredundant_exact",
        ]);
        let mut checks = Vec::new();
        let mut cell = 0u64;
        for &n in &self.lengths {
            for &eps in &self.eps {
                let bound = chain_error_bound(n, eps)?.value();
                let sim =
                    simulate_chain(n, eps, 0, self.trials, derive_trial_seed(Seed(seed), cell))?;
                cell += 1;
                let rel = if bound > 0.0 {
                    (sim.estimate - bound).abs() / bound
                } else {
                    sim.estimate
                };
                let kb = kredundant_bound(n, eps, self.k)?.value();
                let ke = kredundant_exact(n, eps, self.k)?.value();
                checks.push(Check::new(
                    format!("kredundant exact <= bound n={n} eps={}", num(eps.value())),
                    CheckKind::AtMost,
                    ke,
                    kb,
                    1e-12,
                ));
                csv.row([
                    n.to_string(),
                    num(eps.value()),
                    num(bound),
                    num(sim.estimate),
                    num(sim.ci_low),
                    num(sim.ci_high),
                    num(rel),
                    (n as f64 * eps.value() < 1.0).to_string(),
                    num(kb),
                    num(ke),
                ]);
            }
        }

        let lengths: Vec<_> = self
            .eps
            .iter()
            .map(|&e| -> CliResult<_> {
                Ok(json!({
                    "eps": e,
                    "safe_length": safe_length(e, self.delta)?,
                    "kredundant_safe_length": kredundant_safe_length(e, self.delta, self.k)?,
                    "optimal_k": self
                        .lengths
                        .iter()
                        .map(|&n| optimal_k(n, self.delta, e))
                        .collect::<Result<Vec<_>, _>>()?,
                }))
            })
            .collect::<CliResult<_>>()?;
        Ok(Artifacts {
            summary: json!({
                "delta": self.delta,
                "k": self.k,
                "per_eps": lengths,
                "checks": to_json(&checks)?,
            }),
            files: vec![("chain_sim.csv".into(), csv.finish())],
        })
    }
}
