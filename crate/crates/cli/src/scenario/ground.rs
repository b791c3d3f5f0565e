use std::path::{Path, PathBuf};

use boundary_core::grounding::{
    attribution_floor, certified_radius, kg_vote, metric_requirements, radius_oracle, regret_bound,
    run_bandit_retrieval, BanditEnv, Query, RetrievalAction, ToyKG,
};
use boundary_core::{derive_trial_seed, Probability, Seed};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::read_relative;
use crate::error::{CliError, CliResult};
use crate::output::{num, to_json, Artifacts, Check, CheckKind, Csv};

/// Upper limit on `regret(4T) / regret(T)`.
pub const SUBLINEAR_RATIO_MAX: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgSection {
    /// TSV file, read at load time into `tsv`.
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub tsv: Option<String>,
    pub head: String,
    pub relation: String,
    #[serde(default = "default_subgraphs")]
    pub subgraphs: u64,
    pub retention: Probability,
    #[serde(default = "default_cutoff")]
    pub rank_cutoff: usize,
    /// Confirm the certificate with the exhaustive adversary.
    #[serde(default)]
    pub oracle: bool,
}

fn default_subgraphs() -> u64 {
    1000
}

fn default_cutoff() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundConfig {
    pub bandit: BanditEnv,
    pub delta: Probability,
    pub regret_c: f64,
    pub bandit_seeds: u64,
    pub metric_stages: u32,
    pub metric_delta: Probability,
    pub attribution_stages: Vec<u32>,
    pub attribution_eps: Probability,
    pub p_a: Probability,
    pub retention: Probability,
    pub kg: Option<KgSection>,
}

impl Default for GroundConfig {
    fn default() -> Self {
        let p = Probability::clamped;
        GroundConfig {
            bandit: BanditEnv {
                theta: [0.5, -0.5, 0.3, -0.15],
                noise_sigma: 0.3,
                horizon: 1000,
            },
            delta: p(0.05),
            regret_c: 2.0,
            bandit_seeds: 30,
            metric_stages: 5,
            metric_delta: p(0.1),
            attribution_stages: vec![2, 5, 10],
            attribution_eps: p(0.10),
            p_a: p(0.92),
            retention: p(0.7),
            kg: None,
        }
    }
}

impl GroundConfig {
    pub fn inline_files(&mut self, base: &Path) -> CliResult<()> {
        if let Some(kg) = &mut self.kg {
            if let Some(f) = kg.file.take() {
                if kg.tsv.is_some() {
                    return Err(CliError::Config("kg: give either `file` or `tsv`".into()));
                }
                kg.tsv = Some(read_relative(base, &f)?);
            }
        }
        Ok(())
    }

    fn totals(&self, env: &BanditEnv, seed: u64) -> CliResult<Vec<f64>> {
        (0..self.bandit_seeds)
            .into_par_iter()
            .map(|i| {
                run_bandit_retrieval(env, self.delta, derive_trial_seed(Seed(seed), i))
                    .map(|t| t.total_regret())
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(Into::into)
    }

    pub fn run(&self, seed: u64) -> CliResult<Artifacts> {
        if self.bandit_seeds == 0 {
            return Err(CliError::Config("bandit_seeds must be positive".into()));
        }
        let mut checks = Vec::new();
        let trace = run_bandit_retrieval(&self.bandit, self.delta, Seed(seed))?;
        let mut csv = Csv::new(&["step", "action", "reward", "regret"]);
        for r in &trace.rows {
            let action = match r.action {
                RetrievalAction::Retrieve => "retrieve",
                RetrievalAction::Skip => "skip",
            };
            csv.row([
                r.step.to_string(),
                action.to_string(),
                num(r.reward),
                num(r.regret),
            ]);
        }

        let t = self.bandit.horizon;
        let bound = regret_bound(t, 4, self.delta, self.regret_c)?;
        let totals = self.totals(&self.bandit, seed)?;
        let worst = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::new(
            format!("max regret over {} seeds <= envelope", self.bandit_seeds),
            CheckKind::AtMost,
            worst,
            bound,
            0.0,
        ));
        let long = BanditEnv {
            horizon: 4 * t,
            ..self.bandit
        };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ratio = mean(&self.totals(&long, seed)?) / mean(&totals);
        checks.push(Check::new(
            "regret(4T) / regret(T)",
            CheckKind::AtMost,
            ratio,
            SUBLINEAR_RATIO_MAX,
            0.0,
        ));

        let floors = self
            .attribution_stages
            .iter()
            .map(|&k| -> CliResult<_> {
                Ok(json!({"k": k, "floor": attribution_floor(k, self.attribution_eps)?.value()}))
            })
            .collect::<CliResult<Vec<_>>>()?;

        let kg = match &self.kg {
            None => serde_json::Value::Null,
            Some(s) => {
                let text = s
                    .tsv
                    .as_deref()
                    .ok_or_else(|| CliError::Config("kg: `file` or `tsv` required".into()))?;
                let graph = ToyKG::from_tsv(text)?;
                let q = Query::new(&s.head, &s.relation);
                let vote = kg_vote(
                    &graph,
                    &q,
                    s.subgraphs,
                    s.retention,
                    s.rank_cutoff,
                    Seed(seed),
                )?;
                let cert = vote.certificate(s.retention, false)?;
                if s.oracle {
                    let sound = radius_oracle(&graph, &q, s.retention, cert.radius as usize)?;
                    checks.push(Check::new(
                        "no flip within certified radius",
                        CheckKind::AtLeast,
                        f64::from(u8::from(sound)),
                        1.0,
                        0.0,
                    ));
                }
                json!({
                    "prediction": vote.prediction,
                    "p_a": vote.p_a,
                    "report": to_json(&vote.report)?,
                    "ranking": vote.ranking,
                    "certificate": to_json(&cert)?,
                })
            }
        };

        let summary = json!({
            "bandit": {
                "regret": trace.total_regret(),
                "retrieve_fraction": trace.retrieve_fraction,
                "envelope": bound,
                "mean_regret": mean(&totals),
            },
            "metrics": to_json(&metric_requirements(self.metric_stages, self.metric_delta)?)?,
            "attribution_floor": floors,
            "certificate": to_json(&certified_radius(self.p_a, self.retention)?)?,
            "kg": kg,
            "checks": to_json(&checks)?,
        });
        Ok(Artifacts {
            summary,
            files: vec![("bandit.csv".into(), csv.finish())],
        })
    }
}
