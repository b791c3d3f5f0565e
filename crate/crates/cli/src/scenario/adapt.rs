use boundary_core::adaptation::{
    edit_capacity, evopref_gap, mean_trajectory, plateau, pref_regime, quadratic_fit,
    simulate_collapse_many, simulate_preference_with, CollapseConfig, CollapseMode, EditConfig,
    EvoprefConstants, PrefProblem, PreferenceSettings,
};
use boundary_core::{Probability, Seed};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::{num, to_json, Artifacts, Check, CheckKind, Csv};

pub const REPLACEMENT_R2_MIN: f64 = 0.9;
/// Ceiling ratio may deviate from `rho_hi / rho_lo` by this fraction.
pub const CEILING_RATIO_REL_TOL: f64 = 0.4;
/// Minimum ratio of adversarial to clean growth in sample complexity.
pub const TREND_MIN: f64 = 1.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreferenceSweep {
    pub n_items: Vec<u32>,
    pub gammas: Vec<Probability>,
    pub gap: f64,
    pub target_error: Probability,
    pub trials: u64,
    pub settings: PreferenceSettings,
}

impl Default for PreferenceSweep {
    fn default() -> Self {
        PreferenceSweep {
            n_items: vec![10, 20],
            gammas: vec![Probability::ZERO, Probability::clamped(0.1)],
            gap: 0.02,
            target_error: Probability::clamped(1.0 / 3.0),
            trials: 50,
            settings: PreferenceSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvoprefParams {
    pub gamma: Probability,
    pub n: u64,
    pub mu: u64,
    pub generations: u32,
    pub delta: Probability,
    pub constants: EvoprefConstants,
}

impl Default for EvoprefParams {
    fn default() -> Self {
        EvoprefParams {
            gamma: Probability::clamped(0.1),
            n: 52_000,
            mu: 32,
            generations: 200,
            delta: Probability::clamped(0.05),
            constants: EvoprefConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub collapse: CollapseConfig,
    pub collapse_seeds: u64,
    /// Two retention rates compared for the accumulation ceiling.
    pub accumulation_rho: Vec<Probability>,
    pub plateau_fraction: f64,
    pub preference: PreferenceSweep,
    pub regime: PrefProblem,
    pub edit: EditConfig,
    pub evopref: EvoprefParams,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        let p = Probability::clamped;
        AdaptConfig {
            collapse: CollapseConfig {
                dim: 8,
                d_eff: 8.0,
                n_per_gen: 500,
                generations: 100,
                mode: CollapseMode::Replacement,
                n0: 500,
            },
            collapse_seeds: 20,
            accumulation_rho: vec![p(0.01), p(0.05)],
            plateau_fraction: 0.2,
            preference: PreferenceSweep::default(),
            regime: PrefProblem {
                n_items: 500,
                gap: 0.008,
                gamma: p(0.0),
                target_error: p(0.05),
            },
            edit: EditConfig {
                d: 4096,
                alpha: 2.1,
                c: 1.10,
                eta_mag: 0.87,
                tau: 0.1,
                rank: 1,
                layers: 3,
            },
            evopref: EvoprefParams::default(),
        }
    }
}

impl AdaptConfig {
    pub fn run(&self, seed: u64) -> CliResult<Artifacts> {
        let mut checks = Vec::new();

        let runs = simulate_collapse_many(&self.collapse, self.collapse_seeds, Seed(seed))?;
        let mut collapse_csv = Csv::new(&["seed", "generation", "kl"]);
        for (i, run) in runs.iter().enumerate() {
            for pt in run {
                collapse_csv.row([i.to_string(), pt.generation.to_string(), num(pt.kl)]);
            }
        }
        let mean = mean_trajectory(&runs);
        let fit = quadratic_fit(&mean)?;
        if self.collapse.mode == CollapseMode::Replacement {
            checks.push(Check::new(
                "replacement KL quadratic fit R^2",
                CheckKind::AtLeast,
                fit.r_squared,
                REPLACEMENT_R2_MIN,
                0.0,
            ));
        }

        let mut ceilings = Vec::new();
        for &rho in &self.accumulation_rho {
            let cfg = CollapseConfig {
                mode: CollapseMode::Accumulation { rho },
                ..self.collapse
            };
            let m = mean_trajectory(&simulate_collapse_many(
                &cfg,
                self.collapse_seeds,
                Seed(seed),
            )?);
            ceilings.push(json!({"rho": rho, "ceiling": plateau(&m, self.plateau_fraction)?}));
        }
        if let [lo, hi] = self.accumulation_rho.as_slice() {
            let c = |i: usize| ceilings[i]["ceiling"].as_f64().unwrap_or(f64::NAN);
            let want = hi.value() / lo.value();
            checks.push(Check::new(
                format!(
                    "accumulation ceiling ratio rho {} vs {}",
                    num(lo.value()),
                    num(hi.value())
                ),
                CheckKind::Within,
                c(0) / c(1),
                want,
                CEILING_RATIO_REL_TOL * want,
            ));
        }

        let sweep = &self.preference;
        let mut pref_csv = Csv::new(&["n", "gamma", "median_samples", "iqr"]);
        let mut medians = Vec::new();
        for (gi, &gamma) in sweep.gammas.iter().enumerate() {
            let mut row = Vec::new();
            for (ni, &n) in sweep.n_items.iter().enumerate() {
                let problem = PrefProblem {
                    n_items: n,
                    gap: sweep.gap,
                    gamma,
                    target_error: sweep.target_error,
                };
                let cell = (gi * sweep.n_items.len() + ni) as u64;
                let out = simulate_preference_with(
                    &problem,
                    gamma.value() > 0.0,
                    sweep.trials,
                    boundary_core::derive_trial_seed(Seed(seed), cell),
                    &sweep.settings,
                )?;
                pref_csv.row([
                    n.to_string(),
                    num(gamma.value()),
                    num(out.report.estimate),
                    num(out.iqr()),
                ]);
                row.push(out.report.estimate);
            }
            medians.push(row);
        }
        if sweep.gammas.len() >= 2 && sweep.n_items.len() >= 2 {
            let growth = |r: &Vec<f64>| r[1] / r[0];
            let clean = growth(&medians[0]);
            let adv = growth(medians.last().expect("non-empty"));
            checks.push(Check::new(
                "adversarial vs clean sample-complexity growth",
                CheckKind::AtLeast,
                adv / clean,
                TREND_MIN,
                0.0,
            ));
        } else if sweep.gammas.is_empty() || sweep.n_items.is_empty() {
            return Err(CliError::Config(
                "preference sweep needs n_items and gammas".into(),
            ));
        }

        let e = &self.evopref;
        let summary = json!({
            "replacement_fit": to_json(&fit)?,
            "accumulation": ceilings,
            "preference_medians": medians,
            "regime": to_json(&pref_regime(&self.regime)?)?,
            "edit_capacity": to_json(&edit_capacity(&self.edit)?)?,
            "evopref": to_json(&evopref_gap(e.gamma, e.n, e.mu, e.generations, e.delta, &e.constants)?)?,
            "checks": to_json(&checks)?,
        });
        Ok(Artifacts {
            summary,
            files: vec![
                ("collapse.csv".into(), collapse_csv.finish()),
                ("preference.csv".into(), pref_csv.finish()),
            ],
        })
    }
}
