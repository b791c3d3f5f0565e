use boundary_core::chain::{
    fixed_horizon_loss, planted_gap_chain, run_stopping_traced, stopping_oracle, StoppingConfig,
};
use boundary_core::{Probability, Seed};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliResult;
use crate::output::{num, to_json, Artifacts, Check, CheckKind, Csv};

/// Slack allowed above `oracle + lambda t_mix` for the stopping rule.
pub const STOP_SLACK: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopConfig {
    /// Spectral gap of the planted chain.
    pub gamma: f64,
    /// Seed for the chain's jitter; the run seed when absent.
    pub chain_seed: Option<u64>,
    pub lambda: Probability,
    /// Gap estimate used by the rule; `gamma` when absent.
    pub gamma_hat: Option<Probability>,
    pub ema_coeff: Probability,
    pub n_max: u64,
    pub trials: u64,
    pub trace_trials: u64,
    pub fixed_horizons: Vec<u64>,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            gamma: 0.3,
            chain_seed: None,
            lambda: Probability::clamped(0.025),
            gamma_hat: None,
            ema_coeff: Probability::clamped(0.3),
            n_max: 100,
            trials: 20_000,
            trace_trials: 20,
            fixed_horizons: vec![1, 2, 5, 10, 20, 50],
        }
    }
}

impl StopConfig {
    pub fn run(&self, seed: u64) -> CliResult<Artifacts> {
        let model = planted_gap_chain(self.gamma, Seed(self.chain_seed.unwrap_or(seed)))?;
        let cfg = StoppingConfig {
            lambda: self.lambda,
            gamma_hat: self
                .gamma_hat
                .unwrap_or_else(|| Probability::clamped(self.gamma)),
            ema_coeff: self.ema_coeff,
            n_max: self.n_max,
        };
        let h_star = cfg.threshold()?;
        let (outcome, rows) =
            run_stopping_traced(&model, &cfg, self.trials, Seed(seed), self.trace_trials)?;
        let oracle = stopping_oracle(&model, self.lambda, self.n_max)?;
        let t_mix = (model.kernel.len() as f64).ln() / self.gamma;

        let mut checks = vec![Check::new(
            "rule loss <= oracle + lambda t_mix + slack",
            CheckKind::AtMost,
            outcome.mean_loss,
            oracle + self.lambda.value() * t_mix,
            STOP_SLACK,
        )];
        let mut fixed = Vec::new();
        for &h in &self.fixed_horizons {
            let loss = fixed_horizon_loss(&model, self.lambda, h)?;
            fixed.push(json!({"horizon": h, "loss": loss}));
            checks.push(Check::new(
                format!("oracle <= fixed horizon {h}"),
                CheckKind::AtMost,
                oracle,
                loss,
                1e-12,
            ));
        }

        let mut csv = Csv::new(&[
            "trial",
            "step",
            "state",
            "entropy",
            "smoothed_entropy",
            "stopped",
        ]);
        for r in &rows {
            csv.row([
                r.trial.to_string(),
                r.step.to_string(),
                r.state.to_string(),
                num(r.entropy),
                num(r.smoothed_entropy),
                r.stopped.to_string(),
            ]);
        }
        Ok(Artifacts {
            summary: json!({
                "h_star": h_star,
                "t_mix": t_mix,
                "outcome": to_json(&outcome)?,
                "oracle_loss": oracle,
                "fixed_horizons": fixed,
                "checks": to_json(&checks)?,
            }),
            files: vec![("trajectories.csv".into(), csv.finish())],
        })
    }
}
