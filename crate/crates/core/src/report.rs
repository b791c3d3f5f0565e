//! Uniform verdict and Monte Carlo report records.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prob::{Probability, Seed};
use crate::stats::{mean_sd, wilson_interval, z_for_confidence};

/// Unit of a [`SpecVerdict`] violation cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostUnits {
    Probability,
    SampleCount,
    WelfareFraction,
    PercentagePoints,
    Multiplier,
}

/// Prescribed design action, one per catalogue row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    DelegateOutsideArchitecture,
    DelegateAtHorizon,
    EntropyStoppingWithVerification,
    InvestInSupervision,
    CapRankScaleData,
    MeasureMisspecificationPreferRlhf,
    RetainRealData,
    RetrainBeyondEditCapacity,
    IndependentMetrics,
    ClassifyBeforeRouting,
    StepLevelAdaptiveRetrieval,
    InterventionBasedAttribution,
    CertifiedSubgraphAggregation,
    OspMechanism,
    ReduceNonlinearityCount,
    DeployMechanismAndVerification,
}

impl Rule {
    /// The catalogue row (1..=16) this rule belongs to.
    pub fn spec_id(self) -> u8 {
        self as u8 + 1
    }

    pub fn for_spec(spec_id: u8) -> Option<Rule> {
        use Rule::*;
        const ALL: [Rule; 16] = [
            DelegateOutsideArchitecture,
            DelegateAtHorizon,
            EntropyStoppingWithVerification,
            InvestInSupervision,
            CapRankScaleData,
            MeasureMisspecificationPreferRlhf,
            RetainRealData,
            RetrainBeyondEditCapacity,
            IndependentMetrics,
            ClassifyBeforeRouting,
            StepLevelAdaptiveRetrieval,
            InterventionBasedAttribution,
            CertifiedSubgraphAggregation,
            OspMechanism,
            ReduceNonlinearityCount,
            DeployMechanismAndVerification,
        ];
        ALL.get(usize::from(spec_id).checked_sub(1)?).copied()
    }
}

/// Result of evaluating one specification at concrete parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecVerdict {
    pub spec_id: u8,
    pub boundary_value: f64,
    pub satisfied: bool,
    pub violation_cost: f64,
    pub cost_units: CostUnits,
    pub rule: Rule,
    /// Set when a bound exceeded 1 and was clipped.
    #[serde(default)]
    pub vacuous: bool,
}

impl SpecVerdict {
    pub fn new(
        spec_id: u8,
        boundary_value: f64,
        satisfied: bool,
        violation_cost: f64,
        cost_units: CostUnits,
    ) -> Result<Self> {
        let rule = Rule::for_spec(spec_id)
            .ok_or_else(|| invalid("spec_id", format!("{spec_id} not in 1..=16")))?;
        if !(violation_cost >= 0.0) {
            return Err(invalid("violation_cost", "must be non-negative"));
        }
        Ok(SpecVerdict {
            spec_id,
            boundary_value,
            satisfied,
            violation_cost,
            cost_units,
            rule,
            vacuous: false,
        })
    }

    pub fn with_vacuous(mut self, vacuous: bool) -> Self {
        self.vacuous = vacuous;
        self
    }
}

/// Seeded Monte Carlo estimate with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub master_seed: Seed,
}

impl SimReport {
    /// Proportion with a Wilson 95% interval.
    pub fn proportion(successes: u64, trials: u64, master_seed: Seed) -> Result<Self> {
        let conf = Probability::new(0.95)?;
        let (lo, hi) = wilson_interval(successes, trials, conf)?;
        Ok(SimReport {
            estimate: successes as f64 / trials as f64,
            ci_low: lo.value(),
            ci_high: hi.value(),
            trials,
            master_seed,
        })
    }

    /// Mean of real-valued samples with a normal 95% interval.
    pub fn mean(samples: &[f64], master_seed: Seed) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("samples", "empty"));
        }
        let (m, sd) = mean_sd(samples);
        let half = z_for_confidence(0.95) * sd / (samples.len() as f64).sqrt();
        Ok(SimReport {
            estimate: m,
            ci_low: m - half,
            ci_high: m + half,
            trials: samples.len() as u64,
            master_seed,
        })
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_ids_round_trip() {
        for id in 1..=16u8 {
            assert_eq!(Rule::for_spec(id).unwrap().spec_id(), id);
        }
        assert!(Rule::for_spec(0).is_none());
        assert!(Rule::for_spec(17).is_none());
    }

    #[test]
    fn verdict_rejects_bad_input() {
        assert!(SpecVerdict::new(0, 1.0, true, 0.0, CostUnits::Probability).is_err());
        assert!(SpecVerdict::new(3, 1.0, true, -0.1, CostUnits::Probability).is_err());
        let v = SpecVerdict::new(3, 0.2, true, 0.2, CostUnits::Probability).unwrap();
        assert_eq!(v.rule, Rule::EntropyStoppingWithVerification);
    }

    #[test]
    fn report_orders_interval() {
        let r = SimReport::proportion(30, 100, Seed(1)).unwrap();
        assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
        let m = SimReport::mean(&[1.0, 2.0, 3.0], Seed(1)).unwrap();
        assert!(m.contains(2.0));
    }
}
