use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Outcome name to value.
pub type Valuation = BTreeMap<String, f64>;

/// Two-agent instance on which agent 1 gains `beta` by reporting its
/// valuation under the other prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcgCounterexample {
    /// Outcome preferred under the actual prompt.
    pub outcome_a: String,
    /// Outcome preferred under the alternative prompt.
    pub outcome_b: String,
    /// Agent 2's valuation.
    pub others_valuations: Valuation,
    pub payment_truth: f64,
    pub payment_dev: f64,
    pub utility_truth: f64,
    pub utility_dev: f64,
    /// `utility_dev - utility_truth`, computed by executing the payments.
    pub deviation_profit: f64,
    /// Whether the stipulated allocations (truth -> a, misreport -> a')
    /// also maximise reported welfare.
    pub allocation_efficient: bool,
    /// Deviation profit when the same reports go through a welfare
    /// maximising allocation with Clarke pivot payments `h - sum_others`.
    pub clarke_pivot_profit: f64,
}

/// Build the reversal instance.
///
/// Payments follow `p_1(v) = sum_{j != 1} v_j(f(v)) - sum_{j != 1} v_j(f(v_-1))`
/// with the allocation fixed to `a` under the truthful report and `a'`
/// under the misreport.
pub fn vcg_counterexample(
    valuation_pi: &Valuation,
    valuation_pi_prime: &Valuation,
    beta: f64,
) -> Result<VcgCounterexample> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta", "must be positive"));
    }
    if valuation_pi.len() < 2 || valuation_pi.keys().ne(valuation_pi_prime.keys()) {
        return Err(invalid(
            "valuation",
            "both valuations need the same two or more outcomes",
        ));
    }
    if valuation_pi
        .values()
        .chain(valuation_pi_prime.values())
        .any(|v| !v.is_finite())
    {
        return Err(invalid("valuation", "values must be finite"));
    }
    let (a, b) = find_reversal(valuation_pi, valuation_pi_prime).ok_or(Error::NoReversal)?;
    let v = |k: &str| valuation_pi[k];
    let d = v(a) - v(b);
    let alpha = d + beta;

    let others: Valuation = valuation_pi
        .keys()
        .map(|k| (k.clone(), if k == a { alpha } else { 0.0 }))
        .collect();
    let o = |k: &str| others[k];
    // others alone pick `a`
    let without = argmax(&others, |_| 0.0);

    let payment_truth = o(a) - o(without);
    let payment_dev = o(b) - o(without);
    let utility_truth = v(a) - payment_truth;
    let utility_dev = v(b) - payment_dev;

    let welfare = |report: &Valuation| argmax(&others, |k| report[k]);
    let allocation_efficient = welfare(valuation_pi) == a && welfare(valuation_pi_prime) == b;

    let clarke = |report: &Valuation| {
        let f = welfare(report);
        v(f) - (o(without) - o(f))
    };
    let clarke_pivot_profit = clarke(valuation_pi_prime) - clarke(valuation_pi);

    Ok(VcgCounterexample {
        outcome_a: a.to_string(),
        outcome_b: b.to_string(),
        others_valuations: others,
        payment_truth,
        payment_dev,
        utility_truth,
        utility_dev,
        deviation_profit: utility_dev - utility_truth,
        allocation_efficient,
        clarke_pivot_profit,
    })
}

/// First outcome pair (in key order) ordered strictly one way under `p`
/// and strictly the other way under `q`.
fn find_reversal<'a>(p: &'a Valuation, q: &Valuation) -> Option<(&'a str, &'a str)> {
    for (x, &px) in p {
        for (y, &py) in p {
            if px > py && q[y] > q[x] {
                return Some((x.as_str(), y.as_str()));
            }
        }
    }
    None
}

/// Outcome maximising `others + extra`, ties to the first key.
fn argmax(others: &Valuation, extra: impl Fn(&str) -> f64) -> &str {
    let mut best: Option<(&str, f64)> = None;
    for (k, &x) in others {
        let w = x + extra(k);
        if best.is_none_or(|(_, bw)| w > bw) {
            best = Some((k, w));
        }
    }
    best.expect("non-empty").0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn val(pairs: &[(&str, f64)]) -> Valuation {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn reference_instance() {
        let pi = val(&[("a", 2.0), ("a'", 1.0)]);
        let pi2 = val(&[("a", 1.0), ("a'", 2.0)]);
        let c = vcg_counterexample(&pi, &pi2, 0.1).unwrap();
        assert_eq!((c.outcome_a.as_str(), c.outcome_b.as_str()), ("a", "a'"));
        assert!((c.deviation_profit - 0.1).abs() < 1e-12);
        assert!((c.others_valuations["a"] - 1.1).abs() < 1e-12);
        // a welfare maximiser keeps `a` under both reports
        assert!(!c.allocation_efficient);
        assert!(c.clarke_pivot_profit <= 0.0);
    }

    #[test]
    fn identical_valuations_have_no_reversal() {
        let pi = val(&[("a", 2.0), ("b", 1.0), ("c", 0.5)]);
        assert_eq!(vcg_counterexample(&pi, &pi, 0.1), Err(Error::NoReversal));
    }

    #[test]
    fn rejects_bad_input() {
        let pi = val(&[("a", 2.0), ("b", 1.0)]);
        let other = val(&[("a", 2.0), ("c", 1.0)]);
        assert!(vcg_counterexample(&pi, &other, 0.1).is_err());
        assert!(vcg_counterexample(&pi, &pi, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn profit_equals_beta_and_clarke_is_truthful(
            hi in 0.1f64..10.0, lo in -5.0f64..0.09, hi2 in 0.1f64..10.0, lo2 in -5.0f64..0.09,
            beta in 1e-3f64..5.0,
        ) {
            let pi = val(&[("x", hi), ("y", lo)]);
            let pi2 = val(&[("x", lo2), ("y", hi2)]);
            let c = vcg_counterexample(&pi, &pi2, beta).unwrap();
            prop_assert!((c.deviation_profit - beta).abs() < 1e-12 * (1.0 + hi.abs() + beta));
            prop_assert!(c.clarke_pivot_profit <= 1e-12);
            let c2 = vcg_counterexample(&pi, &pi2, 2.0 * beta).unwrap();
            prop_assert!((c2.deviation_profit - 2.0 * c.deviation_profit).abs() < 1e-9);
        }
    }
}
