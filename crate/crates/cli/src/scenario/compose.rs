use boundary_core::compose::{
    attenuation_sweep, crossover_depth, joint_reliability, marginal_attenuation, AttenuationBox,
    CompositionParams, CrossoverModel,
};
use boundary_core::{Error, Probability};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliResult;
use crate::output::{to_json, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossoverSection {
    pub eps: Probability,
    pub eta: Probability,
    pub q: Probability,
    pub model: CrossoverModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComposeConfig {
    /// Operating point for joint reliability.
    pub params: CompositionParams,
    /// Deep operating point for the attenuation ratio.
    pub attenuation: CompositionParams,
    pub n_shallow: f64,
    #[serde(rename = "box")]
    pub sweep: AttenuationBox,
    pub crossover: CrossoverSection,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        let p = Probability::clamped;
        ComposeConfig {
            params: CompositionParams {
                n: 12.0,
                eps: p(0.03),
                q: p(0.8),
                eta: p(0.7),
            },
            attenuation: CompositionParams {
                n: 27.0,
                eps: p(0.03),
                q: p(0.6),
                eta: p(0.7),
            },
            n_shallow: 5.0,
            sweep: AttenuationBox::default(),
            crossover: CrossoverSection {
                eps: p(0.03),
                eta: p(0.7),
                q: p(0.6),
                model: CrossoverModel::CALIBRATED,
            },
        }
    }
}

impl ComposeConfig {
    pub fn run(&self) -> CliResult<Artifacts> {
        let c = &self.crossover;
        // no root in range is a result, not a failure
        let crossover = match crossover_depth(c.eps, c.eta, c.q, &c.model) {
            Ok(x) => {
                json!({ "found": true, "n_c": x.n_c, "matches_reference": x.matches_reference })
            }
            Err(Error::NoRoot(why)) => json!({ "found": false, "reason": why }),
            Err(e) => return Err(e.into()),
        };
        let summary = json!({
            "joint_reliability": joint_reliability(&self.params)?.value(),
            "attenuation": to_json(&marginal_attenuation(&self.attenuation, self.n_shallow)?)?,
            "attenuation_spread": to_json(&attenuation_sweep(&self.sweep)?)?,
            "crossover": crossover,
        });
        Ok(Artifacts {
            summary,
            files: Vec::new(),
        })
    }
}
