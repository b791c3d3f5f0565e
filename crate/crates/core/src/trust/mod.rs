//! Mechanism design for LLM agents and the cost of verifying their work.

mod market;
mod vcg;

pub use market::{
    audit_millipede, build_millipede, run_marketplace, run_selective, AgentModel, AuditReport,
    Child, DecisionNode, MarketRun, Marketplace, MechanismTree, MillipedeOptions, SelectiveRun,
    SelectiveSettings, Terminal,
};
pub use vcg::{vcg_counterexample, Valuation, VcgCounterexample};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prob::Probability;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspEpsilon {
    pub eps2: Probability,
    pub eps_total: Probability,
}

/// `eps2 = T sigma^2 / delta_min^2` (Chebyshev), `eps = eps1 + eps2`,
/// both clipped to 1.
pub fn osp_epsilon(agent: &AgentModel, t_infosets: u32, delta_min: f64) -> Result<OspEpsilon> {
    agent.validate()?;
    if t_infosets == 0 {
        return Err(invalid("t_infosets", "must be positive"));
    }
    if !(delta_min > 0.0) || !delta_min.is_finite() {
        return Err(invalid("delta_min", "must be positive"));
    }
    let eps2 = Probability::clamped(t_infosets as f64 * (agent.prompt_shift / delta_min).powi(2));
    Ok(OspEpsilon {
        eps2,
        eps_total: Probability::clamped(agent.eps1.value() + eps2.value()),
    })
}

/// Measured violation components for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub model: &'static str,
    pub eps1: f64,
    pub eps2: f64,
    pub total: f64,
    pub ci: (f64, f64),
}

pub const EPSILON_TABLE: [EpsilonRow; 4] = [
    EpsilonRow {
        model: "GPT-4",
        eps1: 0.138,
        eps2: 0.019,
        total: 0.157,
        ci: (0.131, 0.184),
    },
    EpsilonRow {
        model: "Claude-3 Opus",
        eps1: 0.112,
        eps2: 0.015,
        total: 0.127,
        ci: (0.103, 0.152),
    },
    EpsilonRow {
        model: "Llama-3-70B",
        eps1: 0.176,
        eps2: 0.031,
        total: 0.207,
        ci: (0.178, 0.238),
    },
    EpsilonRow {
        model: "Mixtral-8x22B",
        eps1: 0.193,
        eps2: 0.027,
        total: 0.220,
        ci: (0.191, 0.251),
    },
];

impl EpsilonRow {
    /// Agent whose prompt shift reproduces `eps2` at one information set
    /// with unit margin.
    pub fn agent(&self) -> AgentModel {
        AgentModel {
            eps1: Probability::clamped(self.eps1),
            prompt_shift: self.eps2.sqrt(),
            k_star: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoalitionBound {
    pub bound: Probability,
    pub vacuous: bool,
}

/// `1 - n eps - eta`, clipped at 0.
pub fn coalition_stability_bound(
    n_agents: u32,
    eps: Probability,
    eta: Probability,
) -> Result<CoalitionBound> {
    if n_agents == 0 {
        return Err(invalid("n_agents", "must be positive"));
    }
    let raw = 1.0 - n_agents as f64 * eps.value() - eta.value();
    Ok(CoalitionBound {
        bound: Probability::clamped(raw),
        vacuous: raw <= 0.0,
    })
}

/// `SMD <= TRACTABLE_SMD_FACTOR ln n` counts as the logarithmic regime.
pub const TRACTABLE_SMD_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmdParams {
    pub smd: f64,
    pub gamma: Probability,
    pub lambda_margin: Probability,
    pub eps: Probability,
    pub n_agents: u32,
    pub delta: Probability,
    pub c: f64,
    pub coalition_size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmdBudget {
    pub samples: f64,
    pub tractable: bool,
    /// Exact detection is NP-hard for coalitions of three or more.
    pub np_hard: bool,
}

/// `c SMD / (gamma^2 lambda^2 eps^2) ln(n / delta)`.
pub fn smd_sample_complexity(p: &SmdParams) -> Result<SmdBudget> {
    let (g, l, e, d) = (
        p.gamma.value(),
        p.lambda_margin.value(),
        p.eps.value(),
        p.delta.value(),
    );
    if !(p.smd > 0.0 && p.c > 0.0) || g == 0.0 || l == 0.0 || e == 0.0 || d == 0.0 {
        return Err(invalid("smd", "all parameters must be strictly positive"));
    }
    if p.n_agents == 0 {
        return Err(invalid("n_agents", "must be positive"));
    }
    let n = p.n_agents as f64;
    let log_term = (n / d).ln();
    if !(log_term > 0.0) {
        return Err(invalid("delta", "need n_agents / delta > 1"));
    }
    Ok(SmdBudget {
        samples: p.c * p.smd / (g * g * l * l * e * e) * log_term,
        tractable: p.smd <= TRACTABLE_SMD_FACTOR * n.max(2.0).ln(),
        np_hard: p.coalition_size >= 3,
    })
}

/// Field size and proof-system overheads behind the per-operation tax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaxConfig {
    pub log_p: f64,
    pub overhead_mle: f64,
    pub overhead_lookup: f64,
    pub overhead_fs: f64,
    pub relu_fraction: Probability,
    /// ReLU lookups cost this share of `overhead_lookup`; Softmax pays it
    /// in full.
    pub relu_lookup_share: Probability,
}

impl Default for TaxConfig {
    fn default() -> Self {
        TaxConfig {
            log_p: 128.0,
            overhead_mle: 0.05,
            overhead_lookup: 0.085,
            overhead_fs: 0.03,
            relu_fraction: Probability::clamped(0.9),
            relu_lookup_share: Probability::clamped(0.7),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityTax {
    pub floor: f64,
    pub stacked: f64,
    pub headline: f64,
}

pub fn nonlinearity_tax(cfg: &TaxConfig) -> Result<NonlinearityTax> {
    if !(cfg.log_p > 0.0) || !cfg.log_p.is_finite() {
        return Err(invalid("log_p", "must be positive"));
    }
    for (name, x) in [
        ("overhead_mle", cfg.overhead_mle),
        ("overhead_lookup", cfg.overhead_lookup),
        ("overhead_fs", cfg.overhead_fs),
    ] {
        if !(0.0..=1.0).contains(&x) {
            return Err(invalid(name, "must lie in [0, 1]"));
        }
    }
    let stack = |lookup: f64| {
        cfg.log_p * (1.0 + cfg.overhead_mle) * (1.0 + lookup) * (1.0 + cfg.overhead_fs)
    };
    let stacked = stack(cfg.overhead_lookup);
    let relu = stack(cfg.overhead_lookup * cfg.relu_lookup_share.value());
    let f = cfg.relu_fraction.value();
    Ok(NonlinearityTax {
        floor: cfg.log_p,
        stacked,
        headline: f * relu + (1.0 - f) * stacked,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditionality {
    Unconditional,
    ConditionalOnConjecture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IopFloor {
    pub proof_length_floor: f64,
    pub conditionality: Conditionality,
}

/// Proof-length lower bound for `n_ops` activations. With `conditional`
/// set, Softmax and GELU use the conjectured circuit bounds; otherwise
/// every activation gets the unconditional `n log p`.
pub fn iop_floor(
    n_ops: u64,
    log_p: f64,
    activation: Activation,
    conditional: bool,
) -> Result<IopFloor> {
    if n_ops == 0 {
        return Err(invalid("n_ops", "must be positive"));
    }
    if !(log_p > 1.0) || !log_p.is_finite() {
        return Err(invalid("log_p", "must exceed 1"));
    }
    let base = n_ops as f64 * log_p;
    let (len, c) = match (activation, conditional) {
        (Activation::Softmax, true) => (base * log_p, Conditionality::ConditionalOnConjecture),
        (Activation::Gelu, true) => (base * log_p.ln(), Conditionality::ConditionalOnConjecture),
        _ => (base, Conditionality::Unconditional),
    };
    Ok(IopFloor {
        proof_length_floor: len,
        conditionality: c,
    })
}

/// Recorded gate counts for one architecture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldingRow {
    pub model: &'static str,
    pub n_max: u64,
    pub nova: u64,
    pub hypernova: u64,
    pub collapse: u64,
    pub hypernova_ratio: f64,
    pub nova_ratio: f64,
}

pub const FOLDING_TABLE: [FoldingRow; 4] = [
    FoldingRow {
        model: "BERT-base",
        n_max: 768,
        nova: 589_824,
        hypernova: 127_345,
        collapse: 55_296,
        hypernova_ratio: 2.3,
        nova_ratio: 10.7,
    },
    FoldingRow {
        model: "GPT-2",
        n_max: 1024,
        nova: 1_048_576,
        hypernova: 188_416,
        collapse: 71_680,
        hypernova_ratio: 2.6,
        nova_ratio: 14.6,
    },
    FoldingRow {
        model: "LLaMA-7B",
        n_max: 4096,
        nova: 16_777_216,
        hypernova: 921_600,
        collapse: 294_912,
        hypernova_ratio: 3.1,
        nova_ratio: 56.9,
    },
    FoldingRow {
        model: "LLaMA-13B",
        n_max: 5120,
        nova: 26_214_400,
        hypernova: 1_310_720,
        collapse: 409_600,
        hypernova_ratio: 3.2,
        nova_ratio: 64.0,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldingCosts {
    pub verifier_ops: f64,
    pub recursive_gates: f64,
    /// Recorded counts when `n_max` matches a known architecture.
    pub reference: Option<FoldingRow>,
}

/// Verifier `c_v d log2 n_max`; recursive circuit `c_c log2^2 n_max`.
pub fn folding_costs(
    d_layers: u32,
    n_max: u64,
    c_verifier: f64,
    c_circuit: f64,
) -> Result<FoldingCosts> {
    if d_layers == 0 || n_max < 2 {
        return Err(invalid("n_max", "need d >= 1 and n_max >= 2"));
    }
    if !(c_verifier > 0.0 && c_circuit > 0.0) {
        return Err(invalid("c_verifier", "constants must be positive"));
    }
    let lg = (n_max as f64).log2();
    Ok(FoldingCosts {
        verifier_ops: c_verifier * d_layers as f64 * lg,
        recursive_gates: c_circuit * lg * lg,
        reference: FOLDING_TABLE.iter().find(|r| r.n_max == n_max).copied(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpBase {
    Natural,
    #[default]
    Two,
}

impl ExpBase {
    /// `base^-kappa`.
    pub fn neg_pow(self, kappa: f64) -> f64 {
        match self {
            ExpBase::Natural => (-kappa).exp(),
            ExpBase::Two => (-kappa).exp2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NoVerification,
    NoMechanism,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareLoss {
    pub total: f64,
    /// Share of `total` due to verification soundness error.
    pub verification_term: f64,
}

/// Worst-case welfare loss when the mechanism, verification, or neither is
/// left out.
pub fn welfare_loss(
    scenario: Scenario,
    market: &Marketplace,
    eps: Probability,
    kappa: f64,
    base: ExpBase,
) -> Result<WelfareLoss> {
    market.validate()?;
    if !(kappa > 0.0) {
        return Err(invalid("kappa", "must be positive"));
    }
    let n = market.n_agents() as f64;
    let m = market.m_tasks() as f64;
    let vmax = market.v_max();
    Ok(match scenario {
        Scenario::NoVerification => WelfareLoss {
            total: market
                .values
                .iter()
                .zip(&market.gaps)
                .map(|(v, d)| v * d)
                .sum(),
            verification_term: 0.0,
        },
        Scenario::NoMechanism => WelfareLoss {
            total: n * eps.value() * vmax,
            verification_term: 0.0,
        },
        Scenario::Both => {
            let ver = m * base.neg_pow(kappa) * vmax;
            WelfareLoss {
                total: n * eps.value() * vmax + ver,
                verification_term: ver,
            }
        }
    })
}

/// Verification cost per unit that puts the optimal sampling rate at 0.3.
pub const SELECTIVE_COST_VER: f64 = 7.0 / 3.0;

/// `(Delta - b) / (Delta + cost (Delta - b))` with `b = base^-kappa`.
pub fn selective_alpha(
    delta: Probability,
    kappa: f64,
    cost_ver: f64,
    base: ExpBase,
) -> Result<Probability> {
    if !(kappa > 0.0) || !(cost_ver >= 0.0) || !cost_ver.is_finite() {
        return Err(invalid(
            "kappa",
            "kappa must be positive and cost_ver non-negative",
        ));
    }
    let gap = delta.value() - base.neg_pow(kappa);
    if !(gap > 0.0) {
        return Err(invalid("delta", "must exceed base^-kappa"));
    }
    Ok(Probability::clamped(gap / (delta.value() + cost_ver * gap)))
}

/// `eps + (1 - alpha) Delta + alpha base^-kappa`, per unit of `V_max`.
pub fn selective_loss(
    eps: Probability,
    alpha: Probability,
    delta: Probability,
    kappa: f64,
    base: ExpBase,
) -> f64 {
    let a = alpha.value();
    eps.value() + (1.0 - a) * delta.value() + a * base.neg_pow(kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    fn unit_market() -> Marketplace {
        Marketplace {
            values: vec![1.0],
            competence: vec![vec![1.0]],
            cost: vec![],
            gaps: vec![0.1],
            budgets: vec![1.0],
        }
    }

    #[test]
    fn epsilon_table_totals() {
        for row in EPSILON_TABLE {
            let e = osp_epsilon(&row.agent(), 1, 1.0).unwrap();
            let total = (e.eps_total.value() * 1000.0).round() / 1000.0;
            assert_eq!(total, row.total, "{}", row.model);
            assert!(row.ci.0 <= row.total && row.total <= row.ci.1);
        }
    }

    #[test]
    fn marketplace_eps2() {
        let a = AgentModel {
            eps1: p(0.1),
            prompt_shift: 0.05,
            k_star: 2,
        };
        let e = osp_epsilon(&a, 10, 1.0).unwrap();
        assert!((e.eps2.value() - 0.025).abs() < 1e-15);
        let calm = AgentModel {
            prompt_shift: 0.0,
            ..a
        };
        assert_eq!(osp_epsilon(&calm, 10, 1.0).unwrap().eps_total, p(0.1));
        assert!(osp_epsilon(&a, 10, 0.0).is_err());
    }

    #[test]
    fn coalition_cases() {
        let b = coalition_stability_bound(3, p(0.05), p(0.1)).unwrap();
        assert!((b.bound.value() - 0.75).abs() < 1e-12 && !b.vacuous);
        assert_eq!(
            coalition_stability_bound(5, p(0.0), p(0.0)).unwrap().bound,
            Probability::ONE
        );
        let v = coalition_stability_bound(10, p(0.1), p(0.2)).unwrap();
        assert!(v.vacuous && v.bound == Probability::ZERO);
    }

    fn smd(g: f64) -> SmdParams {
        SmdParams {
            smd: 2.0 * 8f64.ln(),
            gamma: p(g),
            lambda_margin: p(0.1),
            eps: p(0.1),
            n_agents: 8,
            delta: p(0.05),
            c: 1.0,
            coalition_size: 2,
        }
    }

    #[test]
    fn smd_worked_value() {
        let b = smd_sample_complexity(&smd(0.1)).unwrap();
        let want = 2.0 * 8f64.ln() / 1e-6 * 160f64.ln();
        assert!((b.samples / want - 1.0).abs() < 1e-9);
        assert!((b.samples - 2.11e7).abs() < 0.01e7);
        assert!(b.tractable && !b.np_hard);
        let half = smd_sample_complexity(&smd(0.2)).unwrap();
        assert!((b.samples / half.samples - 4.0).abs() < 1e-9);
        let big = SmdParams {
            smd: 40.0,
            coalition_size: 3,
            ..smd(0.1)
        };
        let r = smd_sample_complexity(&big).unwrap();
        assert!(!r.tractable && r.np_hard);
        assert!(smd_sample_complexity(&smd(0.0)).is_err());
    }

    #[test]
    fn tax_chain() {
        let t = nonlinearity_tax(&TaxConfig::default()).unwrap();
        assert_eq!(t.floor, 128.0);
        assert!((t.stacked - 150.2).abs() < 0.1, "{}", t.stacked);
        assert!((t.headline - 147.0).abs() < 2.0, "{}", t.headline);
    }

    #[test]
    fn iop_cases() {
        let r = iop_floor(1_000_000_000, 128.0, Activation::Relu, true).unwrap();
        assert_eq!(r.proof_length_floor, 1.28e11);
        assert_eq!(r.conditionality, Conditionality::Unconditional);
        let s = iop_floor(10, 128.0, Activation::Softmax, true).unwrap();
        assert_eq!(s.proof_length_floor, 10.0 * 128.0 * 128.0);
        assert_eq!(s.conditionality, Conditionality::ConditionalOnConjecture);
        let su = iop_floor(10, 128.0, Activation::Softmax, false).unwrap();
        assert_eq!(su.conditionality, Conditionality::Unconditional);
        let g = iop_floor(10, 128.0, Activation::Gelu, true).unwrap();
        assert!((g.proof_length_floor - 1280.0 * 128f64.ln()).abs() < 1e-9);
        assert!(iop_floor(0, 128.0, Activation::Relu, false).is_err());
    }

    #[test]
    fn folding_rows() {
        let bert = folding_costs(12, 768, 1.0, 1.0).unwrap();
        assert!(
            (bert.verifier_ops - 115.0).abs() < 0.5,
            "{}",
            bert.verifier_ops
        );
        assert_eq!(bert.reference.unwrap().collapse, 55_296);
        let llama = folding_costs(32, 4096, 1.0, 1.0).unwrap();
        assert_eq!(llama.verifier_ops, 384.0);
        assert_eq!(llama.reference.unwrap().collapse, 294_912);
        assert!(folding_costs(12, 1000, 1.0, 1.0)
            .unwrap()
            .reference
            .is_none());
        for r in FOLDING_TABLE {
            let hn = r.hypernova as f64 / r.collapse as f64;
            assert!((hn - r.hypernova_ratio).abs() < 0.05, "{}", r.model);
            let nv = r.nova as f64 / r.collapse as f64;
            assert!((nv - r.nova_ratio).abs() < 0.05, "{}", r.model);
        }
    }

    #[test]
    fn welfare_scenarios() {
        let m = unit_market();
        let both = welfare_loss(Scenario::Both, &m, p(0.16), 128.0, ExpBase::Two).unwrap();
        assert!((both.total - 0.16).abs() < 1e-30);
        assert!((both.verification_term - 2.938735877e-39).abs() < 1e-47);
        let nat = welfare_loss(Scenario::Both, &m, p(0.16), 128.0, ExpBase::Natural).unwrap();
        assert!(nat.verification_term < 1e-55);
        let none = Marketplace {
            gaps: vec![0.0],
            ..m.clone()
        };
        let nv = welfare_loss(
            Scenario::NoVerification,
            &none,
            p(0.16),
            128.0,
            ExpBase::Two,
        )
        .unwrap();
        assert_eq!(nv.total, 0.0);
        let nm = welfare_loss(Scenario::NoMechanism, &m, p(0.0), 128.0, ExpBase::Two).unwrap();
        assert_eq!(nm.total, 0.0);
    }

    #[test]
    fn alpha_cases() {
        let a = selective_alpha(p(0.1), 128.0, SELECTIVE_COST_VER, ExpBase::Two).unwrap();
        assert!((a.value() - 0.3).abs() < 1e-12);
        let loss = selective_loss(p(0.16), a, p(0.1), 128.0, ExpBase::Two);
        assert!((loss - 0.23).abs() < 1e-12);
        let free = selective_alpha(p(0.1), 128.0, 0.0, ExpBase::Two).unwrap();
        assert!((free.value() - 1.0).abs() < 1e-12);
        assert!(selective_alpha(p(1e-40), 128.0, 1.0, ExpBase::Two).is_err());
        assert!(selective_alpha(p(0.1), 2.0, 1.0, ExpBase::Natural).is_err());
    }

    proptest! {
        #[test]
        fn tax_ordered(
            mle in 0.0f64..1.0, lookup in 0.0f64..1.0, fs in 0.0f64..1.0,
            f in 0.0f64..1.0, share in 0.0f64..1.0, log_p in 1.0f64..512.0,
        ) {
            let cfg = TaxConfig {
                log_p, overhead_mle: mle, overhead_lookup: lookup, overhead_fs: fs,
                relu_fraction: p(f), relu_lookup_share: p(share),
            };
            let t = nonlinearity_tax(&cfg).unwrap();
            prop_assert!(t.floor <= t.headline * (1.0 + 1e-12));
            prop_assert!(t.headline <= t.stacked * (1.0 + 1e-12));
        }

        #[test]
        fn alpha_limits(delta in 0.01f64..1.0, cost in 0.0f64..50.0) {
            let a = selective_alpha(p(delta), 128.0, cost, ExpBase::Two).unwrap().value();
            prop_assert!(a > 0.0 && a <= 1.0);
            prop_assert!((a - 1.0 / (1.0 + cost)).abs() < 1e-12);
        }

        #[test]
        fn verifier_linear_in_depth(d in 1u32..200, n in 2u64..100_000) {
            let one = folding_costs(1, n, 1.0, 1.0).unwrap().verifier_ops;
            let many = folding_costs(d, n, 1.0, 1.0).unwrap().verifier_ops;
            prop_assert!((many - d as f64 * one).abs() <= 1e-9 * many);
        }

        #[test]
        fn eps2_quadratic_in_shift(s in 0.0f64..0.05, t in 1u32..20, dm in 0.5f64..2.0) {
            let a = AgentModel { eps1: p(0.1), prompt_shift: s, k_star: 2 };
            let b = AgentModel { prompt_shift: 2.0 * s, ..a };
            let e1 = osp_epsilon(&a, t, dm).unwrap().eps2.value();
            let e2 = osp_epsilon(&b, t, dm).unwrap().eps2.value();
            if e2 < 1.0 {
                prop_assert!((e2 - 4.0 * e1).abs() < 1e-12);
            }
        }

        #[test]
        fn both_dominates_on_dense_gaps(
            n in 1usize..4, m in 1usize..5, eps in 0.001f64..0.2, v in 0.5f64..2.0,
        ) {
            // equal values, gaps at the dominance threshold
            let gap = (eps * n as f64 / m as f64).min(1.0);
            let market = Marketplace {
                values: vec![v; m],
                competence: vec![vec![0.5; m]; n],
                cost: vec![],
                gaps: vec![gap; m],
                budgets: vec![1.0; n],
            };
            let w = |s| welfare_loss(s, &market, p(eps), 128.0, ExpBase::Two).unwrap();
            let both = w(Scenario::Both);
            prop_assert!(both.total <= w(Scenario::NoVerification).total * (1.0 + 1e-12) + both.verification_term);
            prop_assert!(both.total <= w(Scenario::NoMechanism).total + both.verification_term);
        }
    }
}
