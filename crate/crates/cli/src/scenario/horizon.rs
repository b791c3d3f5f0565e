use boundary_core::horizon::{
    clc_ratio, compositional_ceiling, decay_bound, design_plan, horizon_predict, reference_rows,
    regime_classify, schematic_decay, ArchProfile, TaskProfile,
};
use boundary_core::Probability;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::{num, to_json, Artifacts, Csv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonConfig {
    pub arch: ArchProfile,
    pub task: TaskProfile,
    pub lambda: Probability,
    pub gamma_hat: Probability,
    /// Steps are non-redundant, so process supervision applies.
    pub non_redundant: bool,
    pub answer_space: u64,
    pub decay_c3: f64,
    pub decay_max_depth: f64,
    pub decay_step: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        let p = Probability::clamped;
        HorizonConfig {
            arch: ArchProfile::new(32, 4096).expect("reference architecture"),
            task: TaskProfile {
                depth: 15.0,
                eps: p(0.05),
                m_req: 12,
                n_req: 18,
                n_train: 6,
                target_error: p(0.05),
            },
            lambda: p(0.025),
            gamma_hat: p(0.3),
            non_redundant: true,
            answer_space: 2,
            decay_c3: 1.0,
            decay_max_depth: 100.0,
            decay_step: 1.0,
        }
    }
}

impl HorizonConfig {
    pub fn run(&self) -> CliResult<Artifacts> {
        if !(self.decay_step > 0.0) || !(self.decay_max_depth >= 0.0) {
            return Err(CliError::Config(
                "decay_step must be positive and decay_max_depth non-negative".into(),
            ));
        }
        let d_star = horizon_predict(&self.arch)?;
        let plan = design_plan(
            &self.arch,
            &self.task,
            self.lambda,
            self.gamma_hat,
            self.non_redundant,
        )?;

        let mut csv = Csv::new(&["depth", "schematic", "bound"]);
        let steps = (self.decay_max_depth / self.decay_step).floor() as u64;
        for i in 0..=steps {
            let depth = i as f64 * self.decay_step;
            let s = schematic_decay(depth, d_star)?.value();
            let b = decay_bound(
                depth,
                d_star,
                self.arch.layers,
                self.arch.width,
                self.decay_c3,
            )?
            .value();
            csv.row([num(depth), num(s), num(b)]);
        }

        let reference: Vec<_> = reference_rows()
            .into_iter()
            .map(|(name, tab, re)| json!({"model": name, "tabulated": tab, "recomputed": re}))
            .collect();
        let summary = json!({
            "d_star": d_star,
            "regime": regime_classify(self.task.depth, d_star)?,
            "plan": to_json(&plan)?,
            "clc": to_json(&clc_ratio(&self.task, d_star)?)?,
            "compositional_ceiling": compositional_ceiling(self.answer_space)?.value(),
            "reference": reference,
        });
        Ok(Artifacts {
            summary,
            files: vec![("decay.csv".into(), csv.finish())],
        })
    }
}
