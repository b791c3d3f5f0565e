//! Joint reliability of reasoning chains that also depend on retrieval.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prob::Probability;
use crate::stats::{bisect, quantile};

/// Retention measured for a 7B decoder.
pub const REFERENCE_ETA: f64 = 0.7;

/// `min(1, c_hop / h_cond)`, both in bits.
pub fn retention_factor(c_hop: f64, h_cond: f64) -> Result<Probability> {
    if !(h_cond > 0.0) || !h_cond.is_finite() {
        return Err(invalid("h_cond", "must be positive"));
    }
    if !(c_hop >= 0.0) {
        return Err(invalid("c_hop", "must be non-negative"));
    }
    Ok(Probability::clamped((c_hop / h_cond).min(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionParams {
    /// Reasoning depth.
    pub n: f64,
    pub eps: Probability,
    /// Retrieval quality.
    pub q: Probability,
    /// Retention factor.
    pub eta: Probability,
}

impl CompositionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.n > 0.0) || !self.n.is_finite() {
            return Err(invalid("n", "must be positive"));
        }
        if self.eps.value() >= 0.5 {
            return Err(invalid("eps", "must be below 0.5"));
        }
        if self.q.value() == 0.0 {
            return Err(invalid("q", "must lie in (0, 1]"));
        }
        Ok(())
    }

    fn exponent(&self) -> f64 {
        self.n * (1.0 - self.eta.value())
    }
}

/// `(1 - eps)^n q^(n (1 - eta))`.
pub fn joint_reliability(p: &CompositionParams) -> Result<Probability> {
    p.validate()?;
    let ln = p.n * (-p.eps.value()).ln_1p() + p.exponent() * p.q.value().ln();
    Ok(Probability::clamped(ln.exp()))
}

/// `d g / d q`.
pub fn marginal_q(p: &CompositionParams) -> Result<f64> {
    p.validate()?;
    let k = p.exponent();
    if k == 0.0 {
        return Ok(0.0);
    }
    let (e, q) = (p.eps.value(), p.q.value());
    Ok(k * (1.0 - e).powf(p.n) * q.powf(k - 1.0))
}

/// `d g / d eps` (non-positive).
pub fn marginal_eps(p: &CompositionParams) -> Result<f64> {
    p.validate()?;
    let (e, q) = (p.eps.value(), p.q.value());
    Ok(-p.n * (1.0 - e).powf(p.n - 1.0) * q.powf(p.exponent()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attenuation {
    pub marginal_at_n: f64,
    pub marginal_at_shallow: f64,
    /// `marginal_at_shallow / marginal_at_n`.
    pub attenuation: f64,
}

pub fn marginal_attenuation(p: &CompositionParams, n_shallow: f64) -> Result<Attenuation> {
    let deep = marginal_q(p)?;
    let shallow = marginal_q(&CompositionParams { n: n_shallow, ..*p })?;
    Ok(Attenuation {
        marginal_at_n: deep,
        marginal_at_shallow: shallow,
        attenuation: if deep == 0.0 {
            f64::NAN
        } else {
            shallow / deep
        },
    })
}

/// Parameter ranges swept for the attenuation spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttenuationBox {
    pub eps: (f64, f64),
    pub eta: (f64, f64),
    pub q: (f64, f64),
    pub n: (f64, f64),
    pub n_shallow: f64,
    /// Grid points per axis.
    pub points: usize,
}

impl Default for AttenuationBox {
    fn default() -> Self {
        AttenuationBox {
            eps: (0.02, 0.04),
            eta: (0.65, 0.75),
            q: (0.55, 0.65),
            n: (27.0, 30.0),
            n_shallow: 5.0,
            points: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationSpread {
    pub min: f64,
    pub q25: f64,
    pub q75: f64,
    pub max: f64,
}

/// Attenuation over a full grid of the box.
pub fn attenuation_sweep(b: &AttenuationBox) -> Result<AttenuationSpread> {
    if b.points < 2 {
        return Err(invalid("points", "need at least 2 per axis"));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..b.points)
            .map(|i| lo + (hi - lo) * i as f64 / (b.points - 1) as f64)
            .collect()
    };
    let mut xs = Vec::new();
    for &e in &axis(b.eps) {
        for &h in &axis(b.eta) {
            for &q in &axis(b.q) {
                for &n in &axis(b.n) {
                    let p = CompositionParams {
                        n,
                        eps: Probability::new(e)?,
                        q: Probability::new(q)?,
                        eta: Probability::new(h)?,
                    };
                    xs.push(marginal_attenuation(&p, b.n_shallow)?.attenuation);
                }
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    Ok(AttenuationSpread {
        min: xs[0],
        q25: quantile(&xs, 0.25),
        q75: quantile(&xs, 0.75),
        max: xs[xs.len() - 1],
    })
}

/// Per-unit-budget marginal gains on log reliability, with depth scaling
/// `n^beta_reasoning / (c_eps (1 - eps))` for reasoning and
/// `n^beta_grounding (1 - eta) / (c_q q)` for retrieval. Equal exponents
/// make the ratio independent of depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossoverModel {
    pub cost_eps: f64,
    pub cost_q: f64,
    pub beta_reasoning: f64,
    pub beta_grounding: f64,
}

impl Default for CrossoverModel {
    fn default() -> Self {
        CrossoverModel {
            cost_eps: 1.0,
            cost_q: 1.0,
            beta_reasoning: 1.0,
            beta_grounding: 1.0,
        }
    }
}

impl CrossoverModel {
    /// Calibrated to put the crossover near 6.3 at eps 0.03, eta 0.7, q 0.6.
    pub const CALIBRATED: CrossoverModel = CrossoverModel {
        cost_eps: 5.18,
        cost_q: 1.0,
        beta_reasoning: 1.5,
        beta_grounding: 1.0,
    };
}

pub const CROSSOVER_RANGE: (f64, f64) = (1.0, 100.0);
pub const REFERENCE_CROSSOVER: f64 = 6.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub n_c: f64,
    /// Whether this model puts the reference operating point within 0.5 of
    /// the reference depth.
    pub matches_reference: bool,
}

/// Depth at which a unit of budget buys equal log-reliability from better
/// reasoning and from better retrieval, by bisection on `[1, 100]`.
pub fn crossover_depth(
    eps: Probability,
    eta: Probability,
    q: Probability,
    model: &CrossoverModel,
) -> Result<Crossover> {
    let n_c = solve_crossover(eps, eta, q, model)?;
    let reference = solve_crossover(
        Probability::clamped(0.03),
        Probability::clamped(REFERENCE_ETA),
        Probability::clamped(0.6),
        model,
    );
    Ok(Crossover {
        n_c,
        matches_reference: reference.is_ok_and(|r| (r - REFERENCE_CROSSOVER).abs() <= 0.5),
    })
}

fn solve_crossover(
    eps: Probability,
    eta: Probability,
    q: Probability,
    m: &CrossoverModel,
) -> Result<f64> {
    CompositionParams {
        n: 1.0,
        eps,
        q,
        eta,
    }
    .validate()?;
    if !(m.cost_eps > 0.0 && m.cost_q > 0.0) {
        return Err(invalid("cost_eps", "costs must be positive"));
    }
    if !(m.beta_reasoning.is_finite() && m.beta_grounding.is_finite()) {
        return Err(invalid("beta_reasoning", "exponents must be finite"));
    }
    if eta.value() == 1.0 {
        return Err(Error::NoRoot("retrieval has no effect at eta = 1".into()));
    }
    let ln_r = |n: f64| m.beta_reasoning * n.ln() - (m.cost_eps * (1.0 - eps.value())).ln();
    let ln_g =
        |n: f64| m.beta_grounding * n.ln() + (1.0 - eta.value()).ln() - (m.cost_q * q.value()).ln();
    let (lo, hi) = CROSSOVER_RANGE;
    bisect(|n| ln_r(n) - ln_g(n), lo, hi, 1e-12).ok_or_else(|| {
        Error::NoRoot(format!(
            "marginal gains never cross on [{lo}, {hi}]; depth exponents must differ"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::chain_error_bound;
    use proptest::prelude::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    fn params(n: f64, eps: f64, q: f64, eta: f64) -> CompositionParams {
        CompositionParams {
            n,
            eps: p(eps),
            q: p(q),
            eta: p(eta),
        }
    }

    #[test]
    fn retention_cases() {
        assert_eq!(retention_factor(5.0, 3.0).unwrap(), Probability::ONE);
        assert_eq!(retention_factor(0.0, 3.0).unwrap(), Probability::ZERO);
        assert!((retention_factor(2.1, 3.0).unwrap().value() - REFERENCE_ETA).abs() < 1e-12);
        assert!(retention_factor(1.0, 0.0).is_err());
    }

    #[test]
    fn joint_reference() {
        let g = joint_reliability(&params(12.0, 0.03, 0.8, 0.7)).unwrap();
        assert!((g.value() - 0.311).abs() < 0.001, "{g}");
        assert_eq!(
            joint_reliability(&params(7.0, 0.0, 1.0, 0.3)).unwrap(),
            Probability::ONE
        );
    }

    #[test]
    fn full_retention_is_chain_bound() {
        for n in [1u64, 5, 12, 40] {
            let g = joint_reliability(&params(n as f64, 0.05, 0.4, 1.0)).unwrap();
            let c = chain_error_bound(n, p(0.05)).unwrap().complement();
            assert!((g.value() - c.value()).abs() < 1e-12);
        }
    }

    #[test]
    fn attenuation_reference() {
        let a = marginal_attenuation(&params(27.0, 0.03, 0.6, 0.7), 5.0).unwrap();
        assert!((a.marginal_at_n - 0.095).abs() < 0.001, "{a:?}");
        assert!((a.marginal_at_shallow - 0.998).abs() < 0.001);
        assert!((a.attenuation - 10.5).abs() < 0.105);
        let flat = marginal_attenuation(&params(27.0, 0.03, 0.6, 1.0), 5.0).unwrap();
        assert_eq!((flat.marginal_at_n, flat.marginal_at_shallow), (0.0, 0.0));
    }

    #[test]
    fn box_sweep_brackets_reference() {
        let s = attenuation_sweep(&AttenuationBox::default()).unwrap();
        assert!(s.min < 10.5 && 10.5 < s.max);
        assert!(s.q25 < 10.5 && 10.5 < s.q75);
    }

    #[test]
    fn crossover_calibrated() {
        let c = crossover_depth(p(0.03), p(0.7), p(0.6), &CrossoverModel::CALIBRATED).unwrap();
        assert!((c.n_c - 6.3).abs() < 0.5, "{}", c.n_c);
        assert!(c.matches_reference);
        let flat = crossover_depth(p(0.03), p(0.7), p(0.6), &CrossoverModel::default());
        assert!(matches!(flat, Err(Error::NoRoot(_))));
        let full = crossover_depth(p(0.03), p(1.0), p(0.6), &CrossoverModel::CALIBRATED);
        assert!(matches!(full, Err(Error::NoRoot(_))));
    }

    #[test]
    fn crossover_falls_with_retention() {
        let m = CrossoverModel::CALIBRATED;
        let ns: Vec<f64> = [0.5, 0.6, 0.7, 0.8]
            .iter()
            .map(|&h| crossover_depth(p(0.03), p(h), p(0.6), &m).unwrap().n_c)
            .collect();
        assert!(ns.windows(2).all(|w| w[1] < w[0]), "{ns:?}");
    }

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn factorises(n in 0.5f64..60.0, e in 0.0f64..0.49, q in 0.01f64..1.0, h in 0.0f64..1.0) {
            let g = |e, q| joint_reliability(&params(n, e, q, h)).unwrap().value();
            let lhs = g(e, q);
            let rhs = g(e, 1.0) * g(0.0, q);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300) + 1e-300);
        }

        #[test]
        fn log_linear_in_depth(e in 0.0f64..0.49, q in 0.01f64..1.0, h in 0.0f64..1.0) {
            let slope = (-e).ln_1p() + (1.0 - h) * q.ln();
            for n in [1.0, 2.5, 10.0, 40.0] {
                let g = joint_reliability(&params(n, e, q, h)).unwrap().value();
                if g > 0.0 {
                    prop_assert!((g.ln() - n * slope).abs() < 1e-12 * (1.0 + (n * slope).abs()));
                }
            }
        }

        #[test]
        fn marginals_match_finite_differences(
            n in 1.0f64..40.0, e in 0.01f64..0.3, q in 0.3f64..0.95, h in 0.0f64..0.9,
        ) {
            let base = params(n, e, q, h);
            let fq = central(|x| joint_reliability(&params(n, e, x, h)).unwrap().value(), q);
            let mq = marginal_q(&base).unwrap();
            prop_assert!((fq - mq).abs() <= 1e-6 * mq.abs().max(1e-12));
            let fe = central(|x| joint_reliability(&params(n, x, q, h)).unwrap().value(), e);
            let me = marginal_eps(&base).unwrap();
            prop_assert!((fe - me).abs() <= 1e-6 * me.abs().max(1e-12));
            prop_assert!(mq >= 0.0 && me <= 0.0);
        }

        #[test]
        fn decreasing_in_depth(n in 0.5f64..50.0, e in 0.0f64..0.49, q in 0.01f64..1.0, h in 0.0f64..1.0) {
            let a = joint_reliability(&params(n, e, q, h)).unwrap();
            let b = joint_reliability(&params(n + 1.0, e, q, h)).unwrap();
            prop_assert!(b <= a);
        }
    }
}
