//! The sixteen specifications as rows: boundary condition, violation cost
//! and design rule, with a live verdict when inputs are supplied.

use serde::{Deserialize, Serialize};

use crate::adaptation::{
    calibrated_rank_c0, collapse_lower_bound, edit_capacity, pref_regime, rank_ceiling, EditConfig,
    PrefProblem, PrefRegime, COLLAPSE_C1,
};
use crate::chain::{chain_error_bound, supervision_ratio};
use crate::error::{invalid, Result};
use crate::grounding::{
    attribution_floor, certified_radius, metric_requirements, regret_bound, route_conflict, Route,
};
use crate::horizon::{compositional_ceiling, horizon_predict, schematic_decay, ArchProfile};
use crate::prob::Probability;
use crate::report::{CostUnits, Rule, SpecVerdict};
use crate::trust::{
    nonlinearity_tax, osp_epsilon, welfare_loss, AgentModel, ExpBase, Marketplace, Scenario,
    TaxConfig, EPSILON_TABLE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Reasoning,
    Adaptation,
    Grounding,
    Trust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogueRow {
    pub spec_id: u8,
    pub domain: Domain,
    pub boundary_condition: String,
    pub violation_cost: String,
    pub design_rule: String,
    pub rule: Rule,
    #[serde(default)]
    pub verdict: Option<SpecVerdict>,
}

const ROWS: [(Domain, &str, &str, &str); 16] = [
    (
        Domain::Reasoning,
        "task outside FOC[Attn]",
        "intractable for the architecture",
        "delegate to tools",
    ),
    (
        Domain::Reasoning,
        "depth > d* = c ln L sqrt(ln d)",
        "accuracy degrades past d*",
        "delegate at d*, verify beyond",
    ),
    (
        Domain::Reasoning,
        "chain error 1 - (1 - eps)^n > delta",
        "error compounds with length",
        "entropy stopping plus per-step verification",
    ),
    (
        Domain::Reasoning,
        "outcome supervision costs Theta(T / log T) more",
        "supervision gap grows with length",
        "invest in process supervision",
    ),
    (
        Domain::Adaptation,
        "rank r above N / (c0 (d + k) ln N)",
        "vacuous PAC-Bayes bound",
        "rank <= 32, scale data",
    ),
    (
        Domain::Adaptation,
        "gamma > Delta / n",
        "Theta(n / log n) sample blowup",
        "measure gamma, prefer RLHF",
    ),
    (
        Domain::Adaptation,
        "T^2 d_eff / n_min > 128 pi",
        "TV distance -> 1",
        "retain >= 1% real data",
    ),
    (
        Domain::Adaptation,
        "K > tau sqrt(d) / (c eta (1 - 1/alpha))",
        "off-target interference above tau",
        "retrain beyond K* ~ 13",
    ),
    (
        Domain::Grounding,
        "fewer metrics than k >= 2 stages",
        "ambiguity Omega(1 / delta^(k-1))",
        "use >= k independent metrics",
    ),
    (
        Domain::Grounding,
        "I_meta < H / 2",
        "-9.2 pp accuracy",
        "classify before routing",
    ),
    (
        Domain::Grounding,
        "retrieval without an uncertainty threshold",
        "linear regret instead of d sqrt(T log T)",
        "step-level adaptive retrieval",
    ),
    (
        Domain::Grounding,
        "correlational rather than causal attribution",
        "<= 70% precision",
        "intervention-based attribution (CAS)",
    ),
    (
        Domain::Grounding,
        "edits > Delta* = floor(ln(p_A / (1 - p_A)) / (2 |ln(1 - p)|))",
        "> 90% attack success",
        "certified subgraph aggregation",
    ),
    (
        Domain::Trust,
        "prompt-dependent preferences",
        "VCG not incentive compatible",
        "k*-OSP mechanism, eps <= 0.16",
    ),
    (
        Domain::Trust,
        "tau_op < log p",
        "IOP unsatisfiable",
        "reduce the number of non-linearities",
    ),
    (
        Domain::Trust,
        "mechanism or verification absent",
        "Omega(m Delta) or Omega(n eps) welfare loss",
        "deploy both",
    ),
];

/// Attack success rate against an uncertified pipeline.
pub const UNCERTIFIED_ASR: f64 = 0.9;
/// Precision ceiling of correlational attribution.
pub const CORRELATIONAL_PRECISION: f64 = 0.7;
/// Accuracy lost by routing a deep conflict shallow, percentage points.
pub const MISROUTE_PENALTY_PP: f64 = 9.2;
/// Approximate-OSP tolerance.
pub const OSP_EPS_LIMIT: f64 = 0.16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureInput {
    pub answer_space: u64,
    #[serde(default)]
    pub required_accuracy: Option<Probability>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonInput {
    pub layers: u32,
    pub width: u32,
    #[serde(default)]
    pub depth: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainInput {
    pub n: u64,
    pub eps: Probability,
    pub delta: Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisionInput {
    pub n: f64,
    #[serde(default)]
    pub label_noise: Probability,
    #[serde(default)]
    pub process: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankInput {
    pub d: u64,
    pub k: u64,
    pub n_docs: u64,
    pub rank: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceInput {
    pub n_items: u32,
    pub gap: f64,
    pub gamma: Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseInput {
    pub generations: u32,
    pub d_eff: f64,
    pub n_min: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditInput {
    pub edit: EditConfig,
    pub edits: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricInput {
    pub k_stages: u32,
    pub delta: Probability,
    pub metrics: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingInput {
    pub i_meta: f64,
    pub h_claim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalInput {
    pub t: u64,
    pub d: u32,
    pub delta: Probability,
    pub c: f64,
    #[serde(default = "yes")]
    pub step_level: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionInput {
    pub k_stages: u32,
    pub eps_stage: Probability,
    #[serde(default)]
    pub interventional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifiedInput {
    pub p_a: Probability,
    pub p: Probability,
    pub edits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OspInput {
    pub eps1: Probability,
    pub prompt_shift: f64,
    pub t_infosets: u32,
    pub delta_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxInput {
    #[serde(default)]
    pub tax: TaxConfig,
    #[serde(default)]
    pub tau_op: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareInput {
    pub eps: Probability,
    pub kappa: f64,
    #[serde(default)]
    pub base: ExpBase,
    pub v_max: f64,
    pub n_agents: u32,
    pub m_tasks: u32,
    pub gap: f64,
    pub deployed: Scenario,
}

fn yes() -> bool {
    true
}

/// Optional inputs, one block per row. Rows without inputs carry no verdict.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogueParams {
    pub architecture: Option<ArchitectureInput>,
    pub horizon: Option<HorizonInput>,
    pub chain: Option<ChainInput>,
    pub supervision: Option<SupervisionInput>,
    pub rank: Option<RankInput>,
    pub preference: Option<PreferenceInput>,
    pub collapse: Option<CollapseInput>,
    pub edit: Option<EditInput>,
    pub metrics: Option<MetricInput>,
    pub routing: Option<RoutingInput>,
    pub retrieval: Option<RetrievalInput>,
    pub attribution: Option<AttributionInput>,
    pub certified: Option<CertifiedInput>,
    pub osp: Option<OspInput>,
    pub tax: Option<TaxInput>,
    pub welfare: Option<WelfareInput>,
}

fn p(x: f64) -> Probability {
    Probability::clamped(x)
}

impl CatalogueParams {
    /// Every block filled with the worked-example values.
    pub fn reference() -> Self {
        let gpt4 = EPSILON_TABLE[0].agent();
        CatalogueParams {
            architecture: Some(ArchitectureInput {
                answer_space: 2,
                required_accuracy: None,
            }),
            horizon: Some(HorizonInput {
                layers: 32,
                width: 4096,
                depth: Some(12.0),
            }),
            chain: Some(ChainInput {
                n: 10,
                eps: p(0.05),
                delta: p(0.10),
            }),
            supervision: Some(SupervisionInput {
                n: 20.0,
                label_noise: p(0.0),
                process: true,
            }),
            rank: Some(RankInput {
                d: 4096,
                k: 8192,
                n_docs: 52000,
                rank: 32,
            }),
            preference: Some(PreferenceInput {
                n_items: 500,
                gap: 0.008,
                gamma: p(0.0),
            }),
            collapse: Some(CollapseInput {
                generations: 10,
                d_eff: 8.0,
                n_min: 500,
            }),
            edit: Some(EditInput {
                edit: EditConfig {
                    d: 4096,
                    alpha: 2.1,
                    c: 1.10,
                    eta_mag: 0.87,
                    tau: 0.1,
                    rank: 1,
                    layers: 3,
                },
                edits: 10.0,
            }),
            metrics: Some(MetricInput {
                k_stages: 5,
                delta: p(0.1),
                metrics: 5,
            }),
            routing: Some(RoutingInput {
                i_meta: 0.6,
                h_claim: 1.0,
            }),
            retrieval: Some(RetrievalInput {
                t: 1000,
                d: 4,
                delta: p(0.05),
                c: 2.0,
                step_level: true,
            }),
            attribution: Some(AttributionInput {
                k_stages: 5,
                eps_stage: p(0.10),
                interventional: true,
            }),
            certified: Some(CertifiedInput {
                p_a: p(0.92),
                p: p(0.7),
                edits: 1,
            }),
            osp: Some(OspInput {
                eps1: gpt4.eps1,
                prompt_shift: gpt4.prompt_shift,
                t_infosets: 1,
                delta_min: 1.0,
            }),
            tax: Some(TaxInput {
                tax: TaxConfig::default(),
                tau_op: None,
            }),
            welfare: Some(WelfareInput {
                eps: p(0.16),
                kappa: 128.0,
                base: ExpBase::Two,
                v_max: 1.0,
                n_agents: 1,
                m_tasks: 1,
                gap: 0.1,
                deployed: Scenario::Both,
            }),
        }
    }
}

/// All sixteen rows, with verdicts for the rows whose inputs are present.
pub fn catalogue(params: &CatalogueParams) -> Result<Vec<CatalogueRow>> {
    (1..=16u8).map(|id| catalogue_row(id, params)).collect()
}

pub fn catalogue_row(spec_id: u8, params: &CatalogueParams) -> Result<CatalogueRow> {
    let rule = Rule::for_spec(spec_id)
        .ok_or_else(|| invalid("spec_id", format!("{spec_id} not in 1..=16")))?;
    let (domain, boundary, cost, design) = ROWS[usize::from(spec_id) - 1];
    let verdict = evaluate(spec_id, params)?;
    if let Some(v) = &verdict {
        if !v.boundary_value.is_finite() || !v.violation_cost.is_finite() {
            return Err(invalid(
                "catalogue",
                format!("row {spec_id} evaluates to a non-finite value"),
            ));
        }
    }
    Ok(CatalogueRow {
        spec_id,
        domain,
        boundary_condition: boundary.to_string(),
        violation_cost: cost.to_string(),
        design_rule: design.to_string(),
        rule,
        verdict,
    })
}

fn evaluate(id: u8, params: &CatalogueParams) -> Result<Option<SpecVerdict>> {
    use CostUnits::*;
    let v = match id {
        1 => params.architecture.map(|a| {
            let ceiling = compositional_ceiling(a.answer_space)?.value();
            let need = a.required_accuracy.map_or(0.0, |x| x.value());
            SpecVerdict::new(
                1,
                ceiling,
                need <= ceiling,
                (need - ceiling).max(0.0),
                Probability,
            )
        }),
        2 => params.horizon.map(|h| {
            let d_star = horizon_predict(&ArchProfile::new(h.layers, h.width)?)?;
            let depth = h.depth.unwrap_or(0.0);
            let cost = if depth > d_star {
                schematic_decay(depth, d_star)?.complement().value()
            } else {
                0.0
            };
            SpecVerdict::new(2, d_star, depth <= d_star, cost, Probability)
        }),
        3 => params.chain.map(|c| {
            let b = chain_error_bound(c.n, c.eps)?.value();
            SpecVerdict::new(3, b, b <= c.delta.value(), b, Probability)
        }),
        4 => params.supervision.map(|s| {
            let ratio = supervision_ratio(s.n, s.label_noise)?;
            let cost = if s.process { 0.0 } else { ratio };
            SpecVerdict::new(4, ratio, s.process, cost, Multiplier)
        }),
        5 => params.rank.map(|r| {
            let ceiling = rank_ceiling(r.d, r.k, r.n_docs, calibrated_rank_c0())?;
            let rank = f64::from(r.rank);
            let ok = rank <= ceiling;
            SpecVerdict::new(
                5,
                ceiling,
                ok,
                if ok { 0.0 } else { rank / ceiling },
                Multiplier,
            )
        }),
        6 => params.preference.map(|q| {
            let prob = PrefProblem {
                n_items: q.n_items,
                gap: q.gap,
                gamma: q.gamma,
                target_error: p(0.05),
            };
            let got = pref_regime(&prob)?;
            let well = pref_regime(&PrefProblem {
                gamma: p(0.0),
                ..prob
            })?;
            SpecVerdict::new(
                6,
                got.gamma_star,
                got.regime == PrefRegime::WellSpecified,
                (got.budget - well.budget).max(0.0),
                SampleCount,
            )
        }),
        7 => params.collapse.map(|c| {
            if c.n_min == 0 {
                return Err(invalid("n_min", "must be positive"));
            }
            let t = f64::from(c.generations);
            let load = t * t * c.d_eff / c.n_min as f64;
            let tv = collapse_lower_bound(c.generations, c.d_eff, c.n_min)?.value();
            SpecVerdict::new(7, load, load * COLLAPSE_C1 <= 1.0, tv, Probability)
        }),
        8 => params.edit.map(|e| {
            let k = edit_capacity(&e.edit)?.k_star;
            if !(e.edits >= 0.0) {
                return Err(invalid("edits", "must be non-negative"));
            }
            let ok = e.edits <= k;
            SpecVerdict::new(8, k, ok, if ok { 0.0 } else { e.edits / k }, Multiplier)
        }),
        9 => params.metrics.map(|m| {
            if m.delta.value() == 0.0 {
                return Err(invalid("delta", "must be positive"));
            }
            let req = metric_requirements(m.k_stages, m.delta)?;
            let ok = m.metrics >= req.min_metrics;
            let cost = if ok { 0.0 } else { req.ambiguity_count_order };
            SpecVerdict::new(9, f64::from(req.min_metrics), ok, cost, Multiplier)
        }),
        10 => params.routing.map(|r| {
            let route = route_conflict(&crate::grounding::ConflictInstance {
                i_meta: r.i_meta,
                h_claim: r.h_claim,
                true_type: None,
            })?;
            let shallow = route == Route::Shallow;
            let cost = if shallow { 0.0 } else { MISROUTE_PENALTY_PP };
            SpecVerdict::new(10, r.h_claim / 2.0, shallow, cost, PercentagePoints)
        }),
        11 => params.retrieval.map(|r| {
            let bound = regret_bound(r.t, r.d, r.delta, r.c)?;
            // always-retrieve or never-retrieve pays regret linear in T
            let cost = if r.step_level || bound == 0.0 {
                0.0
            } else {
                r.t as f64 / bound
            };
            SpecVerdict::new(11, bound, r.step_level, cost, Multiplier)
        }),
        12 => params.attribution.map(|a| {
            let floor = attribution_floor(a.k_stages, a.eps_stage)?.value();
            let cost = if a.interventional {
                0.0
            } else {
                1.0 - CORRELATIONAL_PRECISION
            };
            SpecVerdict::new(12, floor, a.interventional, cost, Probability)
        }),
        13 => params.certified.map(|c| {
            let cert = certified_radius(c.p_a, c.p)?;
            let ok = c.edits <= cert.radius;
            let cost = if ok { 0.0 } else { UNCERTIFIED_ASR };
            Ok(
                SpecVerdict::new(13, f64::from(cert.radius), ok, cost, Probability)?
                    .with_vacuous(cert.vacuous),
            )
        }),
        14 => params.osp.map(|o| {
            let agent = AgentModel {
                eps1: o.eps1,
                prompt_shift: o.prompt_shift,
                k_star: 1,
            };
            let e = osp_epsilon(&agent, o.t_infosets, o.delta_min)?
                .eps_total
                .value();
            SpecVerdict::new(14, e, e <= OSP_EPS_LIMIT, e, WelfareFraction)
        }),
        15 => params.tax.map(|t| {
            let tax = nonlinearity_tax(&t.tax)?;
            let ok = t.tau_op.is_none_or(|tau| tau >= tax.floor);
            SpecVerdict::new(15, tax.floor, ok, tax.headline, Multiplier)
        }),
        16 => params.welfare.map(|w| {
            if !(w.v_max > 0.0) || w.n_agents == 0 || w.m_tasks == 0 || !(w.gap >= 0.0) {
                return Err(invalid(
                    "welfare",
                    "need v_max > 0, gap >= 0, agents and tasks",
                ));
            }
            let (n, m) = (w.n_agents as usize, w.m_tasks as usize);
            let market = Marketplace {
                values: vec![w.v_max; m],
                competence: vec![vec![1.0; m]; n],
                cost: Vec::new(),
                gaps: vec![w.gap; m],
                budgets: vec![1.0; n],
            };
            let both = welfare_loss(Scenario::Both, &market, w.eps, w.kappa, w.base)?;
            let got = welfare_loss(w.deployed, &market, w.eps, w.kappa, w.base)?;
            SpecVerdict::new(
                16,
                both.total / w.v_max,
                w.deployed == Scenario::Both,
                got.total / w.v_max,
                WelfareFraction,
            )
        }),
        _ => return Err(invalid("spec_id", format!("{id} not in 1..=16"))),
    };
    v.transpose()
}
