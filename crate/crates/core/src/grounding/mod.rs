//! Evaluation, conflict routing, adaptive retrieval, attribution and
//! certified knowledge-graph voting.

mod bandit;
mod kg;

pub use bandit::{
    mean_regret, regret_bound, run_bandit_retrieval, BanditEnv, BanditRow, BanditTrace,
    RetrievalAction,
};
pub use kg::{
    certified_radius, kg_vote, radius_oracle, vote_distribution, Certificate, KgVote, Query, ToyKG,
    Triple, VoteDistribution, ORACLE_MAX_TRIPLES,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prob::Probability;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRequirements {
    pub min_metrics: u32,
    pub ambiguity_dim: u32,
    pub ambiguity_count_order: f64,
}

/// Metrics needed to tell apart failures across `k_stages` pipeline stages
/// at resolution `delta`.
pub fn metric_requirements(k_stages: u32, delta: Probability) -> Result<MetricRequirements> {
    if k_stages == 0 {
        return Err(invalid("k_stages", "must be at least 1"));
    }
    let dim = k_stages - 1;
    let d = delta.value();
    let count = if dim == 0 {
        1.0
    } else if d == 0.0 {
        f64::INFINITY
    } else {
        d.powi(-(dim as i32))
    };
    Ok(MetricRequirements {
        min_metrics: k_stages,
        ambiguity_dim: dim,
        ambiguity_count_order: count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictType {
    Temporal,
    Numerical,
    Entity,
    Semantic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictInstance {
    /// Metadata information about the resolution, nats.
    pub i_meta: f64,
    /// Entropy of the conflicting claim, nats.
    pub h_claim: f64,
    pub true_type: Option<ConflictType>,
}

impl ConflictInstance {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_claim > 0.0) || !self.h_claim.is_finite() {
            return Err(invalid("h_claim", "must be positive"));
        }
        if !(self.i_meta >= 0.0) || self.i_meta > self.h_claim {
            return Err(invalid("i_meta", "must lie in [0, h_claim]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Shallow,
    Deep,
}

/// Shallow when metadata carries at least half the claim entropy.
pub fn route_conflict(c: &ConflictInstance) -> Result<Route> {
    c.validate()?;
    Ok(if c.i_meta >= c.h_claim / 2.0 {
        Route::Shallow
    } else {
        Route::Deep
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingCost {
    pub accuracy_penalty_pp: f64,
    pub compute_waste_fraction: f64,
}

pub fn routing_cost(routed: Route, truth: Route) -> RoutingCost {
    let (pp, waste) = match (routed, truth) {
        (Route::Shallow, Route::Deep) => (9.2, 0.0),
        (Route::Deep, Route::Shallow) => (0.0, 0.94),
        _ => (0.0, 0.0),
    };
    RoutingCost {
        accuracy_penalty_pp: pp,
        compute_waste_fraction: waste,
    }
}

/// Default edge-retention threshold for counterfactual attribution.
pub const CAS_TAU: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CasScore {
    pub cas: f64,
    pub edge_retained: bool,
}

pub fn cas_score(p_with: Probability, p_without: Probability, tau: Probability) -> CasScore {
    let cas = p_with.value() - p_without.value();
    CasScore {
        cas,
        edge_retained: cas > tau.value(),
    }
}

/// Probability that at least one of `k` stages misattributes.
pub fn attribution_floor(k_stages: u32, eps_stage: Probability) -> Result<Probability> {
    if k_stages == 0 {
        return Err(invalid("k_stages", "must be at least 1"));
    }
    if eps_stage.value() >= 0.5 {
        return Err(invalid("eps_stage", "must be below 0.5"));
    }
    let e = eps_stage.value();
    Ok(Probability::clamped(
        -(k_stages as f64 * (-e).ln_1p()).exp_m1(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    #[test]
    fn metric_counts() {
        let m = metric_requirements(5, p(0.1)).unwrap();
        assert_eq!((m.min_metrics, m.ambiguity_dim), (5, 4));
        let one = metric_requirements(1, p(0.1)).unwrap();
        assert_eq!((one.min_metrics, one.ambiguity_dim), (1, 0));
        let three = metric_requirements(3, p(0.1)).unwrap();
        assert!((three.ambiguity_count_order - 100.0).abs() < 1e-9);
        assert!(metric_requirements(0, p(0.1)).is_err());
    }

    #[test]
    fn routing() {
        let c = |i, h| ConflictInstance {
            i_meta: i,
            h_claim: h,
            true_type: Some(ConflictType::Temporal),
        };
        assert_eq!(route_conflict(&c(2.0, 2.0)).unwrap(), Route::Shallow);
        assert_eq!(route_conflict(&c(0.0, 2.0)).unwrap(), Route::Deep);
        assert_eq!(route_conflict(&c(1.0, 2.0)).unwrap(), Route::Shallow);
        assert_eq!(route_conflict(&c(1.4, 2.0)).unwrap(), Route::Shallow);
        assert!(route_conflict(&c(3.0, 2.0)).is_err());
    }

    #[test]
    fn misrouting_costs() {
        let a = routing_cost(Route::Shallow, Route::Deep);
        assert_eq!(
            (a.accuracy_penalty_pp, a.compute_waste_fraction),
            (9.2, 0.0)
        );
        let b = routing_cost(Route::Deep, Route::Shallow);
        assert_eq!(
            (b.accuracy_penalty_pp, b.compute_waste_fraction),
            (0.0, 0.94)
        );
        let c = routing_cost(Route::Shallow, Route::Shallow);
        assert_eq!(
            (c.accuracy_penalty_pp, c.compute_waste_fraction),
            (0.0, 0.0)
        );
    }

    #[test]
    fn cas_cases() {
        let tau = p(CAS_TAU);
        let same = cas_score(p(0.4), p(0.4), tau);
        assert_eq!(same.cas, 0.0);
        assert!(!same.edge_retained);
        let strong = cas_score(p(0.9), p(0.2), tau);
        assert!((strong.cas - 0.7).abs() < 1e-12 && strong.edge_retained);
        let weak = cas_score(p(0.5), p(0.4), tau);
        assert!((weak.cas - 0.1).abs() < 1e-12 && !weak.edge_retained);
    }

    #[test]
    fn attribution_goldens() {
        let f = |k| attribution_floor(k, p(0.10)).unwrap().value();
        assert!((f(2) - 0.19).abs() < 1e-12);
        assert!((f(5) - 0.41).abs() < 0.005);
        assert!((f(10) - 0.65).abs() < 0.005);
        assert!(attribution_floor(3, p(0.5)).is_err());
    }

    proptest! {
        #[test]
        fn floor_between_union_bounds(k in 1u32..40, e in 0.0f64..0.49) {
            let f = attribution_floor(k, p(e)).unwrap().value();
            let ke = k as f64 * e;
            prop_assert!(f <= ke + 1e-12);
            if ke <= 1.0 {
                prop_assert!(f >= ke * (1.0 - ke) - 1e-12);
            }
            prop_assert!(attribution_floor(k + 1, p(e)).unwrap().value() >= f);
        }

        #[test]
        fn route_scale_invariant(h in 0.01f64..20.0, frac in 0.0f64..1.0, s in 0.01f64..100.0) {
            let a = ConflictInstance { i_meta: frac * h, h_claim: h, true_type: None };
            let b = ConflictInstance { i_meta: frac * h * s, h_claim: h * s, true_type: None };
            prop_assume!((frac - 0.5).abs() > 1e-9);
            prop_assert_eq!(route_conflict(&a).unwrap(), route_conflict(&b).unwrap());
        }
    }
}
