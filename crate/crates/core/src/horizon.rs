//! Architectural depth limits and the reasoning-system design plan.

use serde::{Deserialize, Serialize};

use crate::chain::{
    chain_error_bound, entropy_threshold, optimal_k, safe_length, scaling_exponent,
    supervision_ratio, StrategySpec, Supervision,
};
use crate::error::{invalid, Result};
use crate::prob::Probability;

pub const DEFAULT_C_HAT: f64 = 2.74;

/// Transformer depth and width with the horizon calibration constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchProfile {
    pub layers: u32,
    pub width: u32,
    #[serde(default = "default_c_hat")]
    pub c_hat: f64,
}

fn default_c_hat() -> f64 {
    DEFAULT_C_HAT
}

impl ArchProfile {
    pub fn new(layers: u32, width: u32) -> Result<Self> {
        let a = ArchProfile {
            layers,
            width,
            c_hat: DEFAULT_C_HAT,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(invalid("layers", "must be at least 1"));
        }
        if self.width < 3 {
            return Err(invalid("width", "must be at least 3"));
        }
        if !(self.c_hat >= 0.0) || !self.c_hat.is_finite() {
            return Err(invalid("c_hat", "must be non-negative and finite"));
        }
        Ok(())
    }
}

/// Reference architecture row: name, layers, width, tabulated prediction.
pub type ReferenceArch = (&'static str, u32, u32, f64);

/// Tabulated horizon predictions. Some rows disagree with recomputation
/// (GPT-2 Small and Medium); both numbers are kept, see [`reference_rows`].
pub const REFERENCE_ARCHS: [ReferenceArch; 12] = [
    ("GPT-2 Small", 12, 768, 19.5),
    ("GPT-2 Medium", 24, 1024, 24.2),
    ("GPT-2 Large", 36, 1280, 27.1),
    ("Llama-2 7B", 32, 4096, 27.4),
    ("Llama-2 13B", 40, 5120, 30.1),
    ("Llama-3 8B", 32, 4096, 27.4),
    ("Mistral 7B", 32, 4096, 27.4),
    ("Phi-2 2.7B", 32, 2560, 25.8),
    ("Gemma-2 2B", 18, 2048, 21.0),
    ("Gemma-2 9B", 42, 3584, 30.6),
    ("Qwen-2.5 7B", 28, 3584, 25.7),
    ("OLMo 7B", 32, 4096, 27.4),
];

/// `(name, tabulated, recomputed)` for each reference architecture.
pub fn reference_rows() -> Vec<(&'static str, f64, f64)> {
    REFERENCE_ARCHS
        .iter()
        .map(|&(name, l, d, tab)| {
            let arch = ArchProfile {
                layers: l,
                width: d,
                c_hat: DEFAULT_C_HAT,
            };
            (name, tab, horizon_predict(&arch).unwrap_or(f64::NAN))
        })
        .collect()
}

/// `c_hat * ln L * sqrt(ln d)`.
pub fn horizon_predict(arch: &ArchProfile) -> Result<f64> {
    arch.validate()?;
    Ok(arch.c_hat * f64::from(arch.layers).ln() * f64::from(arch.width).ln().sqrt())
}

/// Upper bound on chain accuracy past the horizon; 1 inside it.
pub fn decay_bound(
    delta: f64,
    d_star: f64,
    layers: u32,
    width: u32,
    c3: f64,
) -> Result<Probability> {
    if !(c3 > 0.0) {
        return Err(invalid("c3", "must be positive"));
    }
    if layers == 0 || width < 3 {
        return Err(invalid("arch", "need layers >= 1 and width >= 3"));
    }
    if delta <= d_star {
        return Ok(Probability::ONE);
    }
    let l = f64::from(layers);
    let e = -c3 * (delta - d_star).powi(2) / (l * l * f64::from(width).ln());
    Ok(Probability::clamped(e.exp()))
}

/// Schematic decay curve `exp(-(delta / d*)^2 ln 2)`, one half at the horizon.
pub fn schematic_decay(delta: f64, d_star: f64) -> Result<Probability> {
    if !(d_star > 0.0) {
        return Err(invalid("d_star", "must be positive"));
    }
    Ok(Probability::clamped(
        (-(delta / d_star).powi(2) * 2f64.ln()).exp(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    ChainOfThought,
    KRedundantVerification,
    ToolDelegation,
}

/// Boundaries are inclusive on the left: `delta == d*` stays chain-of-thought.
pub fn regime_classify(delta: f64, d_star: f64) -> Result<Regime> {
    if !(d_star > 0.0) {
        return Err(invalid("d_star", "must be positive"));
    }
    Ok(if delta <= d_star {
        Regime::ChainOfThought
    } else if delta <= 2.0 * d_star {
        Regime::KRedundantVerification
    } else {
        Regime::ToolDelegation
    })
}

/// Reasoning task demands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskProfile {
    pub depth: f64,
    pub eps: Probability,
    pub m_req: u64,
    pub n_req: u64,
    pub n_train: u64,
    pub target_error: Probability,
}

impl TaskProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0) {
            return Err(invalid("depth", "must be positive"));
        }
        if self.eps.value() >= 0.5 {
            return Err(invalid("eps", "must be below 0.5"));
        }
        if self.n_train == 0 {
            return Err(invalid("n_train", "must be positive"));
        }
        if self.n_req < self.n_train {
            return Err(invalid("n_req", "must be at least n_train"));
        }
        if self.m_req == 0 {
            return Err(invalid("m_req", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClcRatio {
    pub ratio: f64,
    pub failure: bool,
}

/// `2 m_req log2(n_req / n_train) / d*`; failure when the ratio reaches 1.
pub fn clc_ratio(task: &TaskProfile, d_star: f64) -> Result<ClcRatio> {
    task.validate()?;
    if !(d_star > 0.0) {
        return Err(invalid("d_star", "must be positive"));
    }
    let ratio = 2.0 * task.m_req as f64 * (task.n_req as f64 / task.n_train as f64).log2() / d_star;
    Ok(ClcRatio {
        ratio,
        failure: ratio >= 1.0,
    })
}

/// Plan-length bounds. The reference value is recorded data, not derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningCapacity {
    pub lower: f64,
    pub upper: f64,
    pub reference_steps: f64,
}

pub const PLANNING_REFERENCE_STEPS: f64 = 89.0;

pub fn planning_capacity(
    arch: &ArchProfile,
    states: u64,
    actions: u64,
    c_upper: f64,
    c_lower: f64,
) -> Result<PlanningCapacity> {
    arch.validate()?;
    if states < 2 || actions < 2 {
        return Err(invalid("states/actions", "both must be at least 2"));
    }
    if !(c_upper > 0.0 && c_lower > 0.0) {
        return Err(invalid("c_upper/c_lower", "must be positive"));
    }
    let l = f64::from(arch.layers);
    let ln_d = f64::from(arch.width).ln();
    let denom = (states as f64).ln() + (actions as f64).ln();
    Ok(PlanningCapacity {
        lower: c_lower * l * ln_d / denom,
        upper: c_upper * l * l * ln_d / denom,
        reference_steps: PLANNING_REFERENCE_STEPS,
    })
}

/// `3/4 + 1/(2|Y|)`.
pub fn compositional_ceiling(answer_space: u64) -> Result<Probability> {
    if answer_space < 2 {
        return Err(invalid("answer_space", "must be at least 2"));
    }
    Probability::new(0.75 + 0.5 / answer_space as f64)
}

/// Fine-tuned accuracy ceiling past the horizon, clipped to one.
pub fn finetune_envelope(
    d_star: f64,
    d_test: f64,
    acc_base_at_dstar: Probability,
    c_env: f64,
) -> Result<Probability> {
    if !(d_test > d_star) {
        return Err(invalid(
            "d_test",
            "must exceed d_star; use the within-horizon path",
        ));
    }
    if !(d_star > 0.0) {
        return Err(invalid("d_star", "must be positive"));
    }
    if !(c_env >= 0.0) {
        return Err(invalid("c_env", "must be non-negative"));
    }
    let f = d_star / d_test;
    Ok(Probability::clamped(
        (acc_base_at_dstar.value() + c_env) * f,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanStrategy {
    BestOfN,
    BestOfNWithPrm,
    Beam,
    SingleChainVerified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPlan {
    pub d_star: f64,
    pub regime: Regime,
    pub k_star: u64,
    pub n_star: u64,
    pub h_star: f64,
    pub supervision: Supervision,
    pub strategy: PlanStrategy,
    pub strategy_alpha: f64,
    /// `n / ln n` at the task depth.
    pub supervision_gain: f64,
    /// Set when the task must be delegated and the remaining fields only
    /// describe the sub-chains.
    pub advisory: bool,
}

/// Candidate strategies used by [`design_plan`].
pub fn default_strategies(
    task: &TaskProfile,
    supervision: Supervision,
) -> Result<Vec<(PlanStrategy, StrategySpec)>> {
    let n = task.depth.ceil() as u64;
    let outcome_err = chain_error_bound(n, task.eps)?.value().min(0.99);
    let mut v = vec![
        (
            PlanStrategy::BestOfN,
            StrategySpec::BestOfNImperfect { eps_v: outcome_err },
        ),
        (PlanStrategy::Beam, StrategySpec::Beam { width: 4 }),
        (
            PlanStrategy::SingleChainVerified,
            StrategySpec::SingleChainVerified {
                eps: task.eps.value(),
                i_step: 1.0,
            },
        ),
    ];
    if supervision == Supervision::Process {
        v.push((
            PlanStrategy::BestOfNWithPrm,
            StrategySpec::BestOfNImperfect {
                eps_v: task.eps.value(),
            },
        ));
    }
    Ok(v)
}

/// Design rules for a reasoning system: horizon, regime, redundancy level,
/// safe chain length, stopping threshold, supervision and strategy.
pub fn design_plan(
    arch: &ArchProfile,
    task: &TaskProfile,
    lambda: Probability,
    gamma_hat: Probability,
    non_redundant: bool,
) -> Result<DesignPlan> {
    let supervision = if non_redundant {
        Supervision::Process
    } else {
        Supervision::Outcome
    };
    let candidates = default_strategies(task, supervision)?;
    design_plan_with(arch, task, lambda, gamma_hat, non_redundant, &candidates)
}

pub fn design_plan_with(
    arch: &ArchProfile,
    task: &TaskProfile,
    lambda: Probability,
    gamma_hat: Probability,
    non_redundant: bool,
    strategies: &[(PlanStrategy, StrategySpec)],
) -> Result<DesignPlan> {
    task.validate()?;
    let d_star = horizon_predict(arch)?;
    let regime = regime_classify(task.depth, d_star)?;
    let n = task.depth.ceil().max(1.0) as u64;
    let k_star = optimal_k(n, task.target_error, task.eps)?;
    let n_star = safe_length(task.eps, task.target_error)?;
    let h_star = entropy_threshold(lambda, gamma_hat)?;
    let mut best: Option<(PlanStrategy, f64)> = None;
    for &(tag, spec) in strategies {
        let a = scaling_exponent(spec)?;
        if a.degenerate {
            continue;
        }
        if best.is_none_or(|(_, b)| a.alpha > b) {
            best = Some((tag, a.alpha));
        }
    }
    let (strategy, strategy_alpha) =
        best.ok_or_else(|| invalid("strategies", "no usable candidate"))?;
    Ok(DesignPlan {
        d_star,
        regime,
        k_star,
        n_star,
        h_star,
        supervision: if non_redundant {
            Supervision::Process
        } else {
            Supervision::Outcome
        },
        strategy,
        strategy_alpha,
        supervision_gain: supervision_ratio(n.max(2) as f64, Probability::ZERO)?,
        advisory: regime == Regime::ToolDelegation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    fn arch(l: u32, d: u32) -> ArchProfile {
        ArchProfile::new(l, d).unwrap()
    }

    fn task(depth: f64) -> TaskProfile {
        TaskProfile {
            depth,
            eps: p(0.05),
            m_req: 12,
            n_req: 18,
            n_train: 6,
            target_error: p(0.05),
        }
    }

    #[test]
    fn horizon_goldens() {
        assert!((horizon_predict(&arch(32, 4096)).unwrap() - 27.4).abs() < 0.05);
        let zero = ArchProfile {
            c_hat: 0.0,
            ..arch(32, 4096)
        };
        assert_eq!(horizon_predict(&zero).unwrap(), 0.0);
        let oracle = 2.74 * 24f64.ln() * 1024f64.ln().sqrt();
        assert!((horizon_predict(&arch(24, 1024)).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 22.9).abs() < 0.05);
        assert!(ArchProfile::new(0, 4096).is_err());
        assert!(ArchProfile::new(4, 2).is_err());
    }

    #[test]
    fn reference_rows_keep_both_values() {
        let rows = reference_rows();
        let medium = rows.iter().find(|r| r.0 == "GPT-2 Medium").unwrap();
        assert_eq!(medium.1, 24.2);
        assert!((medium.2 - 22.9).abs() < 0.05);
        let llama = rows.iter().find(|r| r.0 == "Llama-2 7B").unwrap();
        assert!((llama.1 - llama.2).abs() < 0.05);
    }

    #[test]
    fn horizon_not_symmetric() {
        let a = horizon_predict(&arch(32, 4096)).unwrap();
        let b = horizon_predict(&arch(4096, 32)).unwrap();
        assert!((a - b).abs() > 1.0);
    }

    #[test]
    fn decay_goldens() {
        assert_eq!(decay_bound(20.0, 27.4, 32, 4096, 1.0).unwrap().value(), 1.0);
        let v = decay_bound(54.8, 27.4, 32, 4096, 1.0).unwrap().value();
        assert!((v - 0.916).abs() < 1e-3, "{v}");
        assert!((schematic_decay(27.4, 27.4).unwrap().value() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn regime_goldens() {
        assert_eq!(regime_classify(12.0, 27.4).unwrap(), Regime::ChainOfThought);
        assert_eq!(regime_classify(27.4, 27.4).unwrap(), Regime::ChainOfThought);
        assert_eq!(
            regime_classify(54.8, 27.4).unwrap(),
            Regime::KRedundantVerification
        );
        assert_eq!(regime_classify(60.0, 27.4).unwrap(), Regime::ToolDelegation);
    }

    #[test]
    fn clc_goldens() {
        let r = clc_ratio(&task(12.0), 27.4).unwrap();
        assert!((r.ratio - 1.39).abs() < 0.01 && r.failure);
        let same = TaskProfile {
            n_req: 6,
            ..task(12.0)
        };
        assert_eq!(clc_ratio(&same, 27.4).unwrap().ratio, 0.0);
        let small = TaskProfile {
            m_req: 5,
            n_req: 12,
            ..task(12.0)
        };
        assert!((clc_ratio(&small, 27.4).unwrap().ratio - 10.0 / 27.4).abs() < 1e-12);
        let bad = TaskProfile {
            n_train: 0,
            ..task(12.0)
        };
        assert!(clc_ratio(&bad, 27.4).is_err());
    }

    #[test]
    fn planning_goldens() {
        let a = planning_capacity(&arch(32, 4096), 73, 12, 1.0, 1.0).unwrap();
        assert!((a.upper - 1257.0).abs() < 1.0, "{}", a.upper);
        assert_eq!(a.reference_steps, 89.0);
        let b = planning_capacity(&arch(64, 4096), 73, 12, 1.0, 1.0).unwrap();
        assert!((b.upper / a.upper - 4.0).abs() < 1e-12);
        assert!(a.lower <= a.upper);
        assert!(planning_capacity(&arch(32, 4096), 1, 12, 1.0, 1.0).is_err());
    }

    #[test]
    fn ceiling_goldens() {
        assert_eq!(compositional_ceiling(2).unwrap().value(), 1.0);
        assert!((compositional_ceiling(10).unwrap().value() - 0.8).abs() < 1e-12);
        assert!((compositional_ceiling(1_000_000_000).unwrap().value() - 0.75).abs() < 1e-9);
        assert!(compositional_ceiling(1).is_err());
    }

    #[test]
    fn envelope_goldens() {
        let f = |d| {
            finetune_envelope(27.4, d, Probability::ONE, 0.0)
                .unwrap()
                .value()
        };
        assert!((f(40.0) - 0.68).abs() < 0.01);
        assert!((f(80.0) - 0.34).abs() < 0.01);
        assert!(f(1e12) < 1e-9);
        assert!(finetune_envelope(27.4, 27.4, Probability::ONE, 0.0).is_err());
    }

    #[test]
    fn worked_example_plan() {
        let plan = design_plan(&arch(32, 4096), &task(15.0), p(0.025), p(0.3), true).unwrap();
        assert!((plan.d_star - 27.4).abs() < 0.05);
        assert_eq!(plan.regime, Regime::ChainOfThought);
        assert_eq!(plan.k_star, 3);
        assert_eq!(plan.supervision, Supervision::Process);
        assert!((plan.supervision_gain - 5.5).abs() < 0.05);
        assert!(!plan.advisory);
        let deep = design_plan(&arch(32, 4096), &task(100.0), p(0.025), p(0.3), false).unwrap();
        assert_eq!(deep.regime, Regime::ToolDelegation);
        assert!(deep.advisory);
    }

    proptest::proptest! {
        #[test]
        fn horizon_monotone(l in 2u32..200, d in 3u32..20000) {
            let h = horizon_predict(&arch(l, d)).unwrap();
            proptest::prop_assert!(horizon_predict(&arch(l + 1, d)).unwrap() > h);
            proptest::prop_assert!(horizon_predict(&arch(l, d + 1)).unwrap() > h);
        }

        #[test]
        fn regime_scale_invariant(delta in 0.0f64..200.0, d in 1.0f64..60.0, c in 0.01f64..100.0) {
            let a = regime_classify(delta, d).unwrap();
            let b = regime_classify(delta * c, d * c).unwrap();
            let near = |x: f64| ((delta - x * d) / d).abs() < 1e-9;
            proptest::prop_assume!(!near(1.0) && !near(2.0));
            proptest::prop_assert_eq!(a, b);
        }

        #[test]
        fn envelope_hyperbolic(d1 in 28.0f64..500.0, step in 0.1f64..100.0, acc in 0.0f64..1.0, c in 0.0f64..1.0) {
            let f = |d: f64| finetune_envelope(27.4, d, p(acc), c).unwrap().value() * d;
            let limit = (acc + c) * 27.4;
            proptest::prop_assert!(f(d1 + step) <= f(d1).max(limit) + 1e-9);
            let g = finetune_envelope(27.4, d1, p(acc), c).unwrap().value();
            proptest::prop_assert!(finetune_envelope(27.4, d1 + step, p(acc), c).unwrap().value() <= g + 1e-15);
        }

        #[test]
        fn clc_flag_monotone(m in 1u64..100, ratio in 1u64..16, d in 5.0f64..60.0) {
            let t = |m| TaskProfile { m_req: m, n_req: 4 * ratio, ..task(10.0) };
            let a = clc_ratio(&TaskProfile { n_train: 4, ..t(m) }, d).unwrap();
            let b = clc_ratio(&TaskProfile { n_train: 4, ..t(m + 1) }, d).unwrap();
            proptest::prop_assert_eq!(a.failure, a.ratio >= 1.0);
            proptest::prop_assert!(!a.failure || b.failure);
        }

        #[test]
        fn decay_monotone(delta in 0.0f64..200.0, step in 0.0f64..50.0) {
            let a = decay_bound(delta, 27.4, 32, 4096, 1.0).unwrap().value();
            let b = decay_bound(delta + step, 27.4, 32, 4096, 1.0).unwrap().value();
            proptest::prop_assert!(b <= a);
            if delta <= 27.4 { proptest::prop_assert_eq!(a, 1.0); }
        }
    }
}
