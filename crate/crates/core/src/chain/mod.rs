//! Chain-of-thought reliability: error propagation, k-redundant voting,
//! entropy stopping, spectral-gap and scaling fits, compute allocation.

mod allocation;
mod fit;
mod sim;
mod stopping;

pub use allocation::{
    allocation_optimum, supervision_ratio, training_fraction, training_fraction_ratio, Allocation,
    Supervision,
};
pub use fit::{estimate_spectral_gap, fit_scaling, scaling_exponent, success_curve, ScalingFit};
pub use sim::simulate_chain;
pub use stopping::{
    fixed_horizon_loss, planted_gap_chain, run_stopping, run_stopping_traced, stopping_oracle,
    ChainModel, StoppingConfig, StoppingOutcome, TraceRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prob::Probability;

/// Relative slack used when a bound predicate is compared with its target.
pub(crate) const PREDICATE_RTOL: f64 = 1e-9;

fn check_eps_half(eps: Probability) -> Result<f64> {
    let e = eps.value();
    if e >= 0.5 {
        return Err(invalid("eps", format!("{e} must be below 0.5")));
    }
    Ok(e)
}

/// `1 - (1 - eps)^n`.
pub fn chain_error_bound(n: u64, eps: Probability) -> Result<Probability> {
    let e = check_eps_half(eps)?;
    Ok(Probability::clamped(-(n as f64 * (-e).ln_1p()).exp_m1()))
}

/// Largest `n` with `chain_error_bound(n, eps) <= delta`.
pub fn safe_length(eps: Probability, delta: Probability) -> Result<u64> {
    let e = check_eps_half(eps)?;
    let d = delta.value();
    if e <= 0.0 {
        return Err(invalid("eps", "must be positive"));
    }
    if d <= 0.0 || d >= 1.0 {
        return Err(invalid("delta", "must lie strictly inside (0, 1)"));
    }
    let x = (-d).ln_1p() / (-e).ln_1p();
    Ok((x * (1.0 + PREDICATE_RTOL)).floor() as u64)
}

/// Fano-style lower bound, clipped at zero.
pub fn fano_lower_bound(n: u64, eps: Probability, answer_space: u64) -> Result<Probability> {
    if answer_space < 2 {
        return Err(invalid("answer_space", "must be at least 2"));
    }
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let e = eps.value();
    let v = 1.0 - (1.0 - e / 2.0).powf(n as f64) - 1.0 / (n as f64 * (answer_space as f64).ln());
    Ok(Probability::clamped(v.max(0.0)))
}

fn majority_need(k: u64) -> u64 {
    (k + 1).div_ceil(2)
}

fn choose(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Union bound on k-redundant chain error before clipping.
pub fn kredundant_bound_raw(n: u64, eps: Probability, k: u64) -> Result<f64> {
    if k < 2 {
        return Err(invalid("k", "must be at least 2"));
    }
    let h = majority_need(k);
    Ok(choose(k + 1, h) * n as f64 * eps.value().powi(h as i32))
}

/// k-redundant union bound clipped to one. See [`kredundant_bound_raw`].
pub fn kredundant_bound(n: u64, eps: Probability, k: u64) -> Result<Probability> {
    Ok(Probability::clamped(kredundant_bound_raw(n, eps, k)?))
}

/// Exact chain error under per-step majority voting over `k + 1` candidates.
pub fn kredundant_exact(n: u64, eps: Probability, k: u64) -> Result<Probability> {
    if k < 2 {
        return Err(invalid("k", "must be at least 2"));
    }
    let p_step = crate::stats::binom_tail(k + 1, majority_need(k), eps)?.value();
    Ok(Probability::clamped(
        -(n as f64 * (-p_step).ln_1p()).exp_m1(),
    ))
}

/// Largest `n` with `kredundant_bound(n, eps, k) <= delta`.
pub fn kredundant_safe_length(eps: Probability, delta: Probability, k: u64) -> Result<u64> {
    let per_step = kredundant_bound_raw(1, eps, k)?;
    let d = delta.value();
    if d <= 0.0 {
        return Ok(0);
    }
    if per_step <= 0.0 {
        return Err(invalid("eps", "must be positive"));
    }
    Ok((d / per_step * (1.0 + PREDICATE_RTOL)).floor() as u64)
}

/// Cost-optimal redundancy level, at least 1.
pub fn optimal_k(n: u64, delta: Probability, eps: Probability) -> Result<u64> {
    let e = check_eps_half(eps)?;
    if e <= 0.0 {
        return Err(invalid("eps", "must be positive"));
    }
    let d = delta.value();
    if d <= 0.0 {
        return Err(invalid("delta", "must be positive"));
    }
    let k = 2.0 * (n as f64 / d).ln() / (1.0 / e).ln() - 1.0;
    Ok(k.ceil().max(1.0) as u64)
}

/// Entropy threshold `h* = (lambda / gamma) ln(1 / lambda)` in nats.
pub fn entropy_threshold(lambda: Probability, gamma: Probability) -> Result<f64> {
    let l = lambda.value();
    let g = gamma.value();
    if l <= 0.0 || l >= 1.0 {
        return Err(invalid("lambda", "must lie strictly inside (0, 1)"));
    }
    if g <= 0.0 {
        return Err(invalid("gamma", "must be positive"));
    }
    Ok(l / g * (1.0 / l).ln())
}

/// Test-time strategy whose scaling exponent is queried.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategySpec {
    BestOfNPerfect,
    BestOfNImperfect { eps_v: f64 },
    Beam { width: u32 },
    SingleChainVerified { eps: f64, i_step: f64 },
}

impl StrategySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StrategySpec::BestOfNPerfect => Ok(()),
            StrategySpec::BestOfNImperfect { eps_v } if (0.0..1.0).contains(&eps_v) => Ok(()),
            StrategySpec::BestOfNImperfect { .. } => Err(invalid("eps_v", "must lie in [0, 1)")),
            StrategySpec::Beam { width } if width >= 2 => Ok(()),
            StrategySpec::Beam { .. } => Err(invalid("width", "must be at least 2")),
            StrategySpec::SingleChainVerified { eps, i_step } => {
                if !(0.0..1.0).contains(&eps) {
                    Err(invalid("eps", "must lie in [0, 1)"))
                } else if !(i_step > 0.0) {
                    Err(invalid("i_step", "must be positive"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    #[test]
    fn chain_error_goldens() {
        let v = |n, e| chain_error_bound(n, p(e)).unwrap().value();
        assert!((v(5, 0.05) - 0.226).abs() < 1e-3);
        assert!((v(10, 0.05) - 0.401).abs() < 1e-3);
        assert!((v(20, 0.05) - 0.642).abs() < 1e-3);
        assert!((v(12, 0.03) - 0.306).abs() < 1e-3);
        assert_eq!(v(7, 0.0), 0.0);
        assert!(chain_error_bound(3, p(0.5)).is_err());
    }

    #[test]
    fn chain_error_matches_enumeration() {
        // Sum the mass of every outcome with at least one failing step.
        for n in 1..=20u32 {
            for &e in &[0.01f64, 0.1, 0.3] {
                // Neumaier summation keeps 2^20 terms inside 1e-12.
                let (mut sum, mut comp) = (0.0f64, 0.0f64);
                for m in 1u64..(1u64 << n) {
                    let f = m.count_ones() as i32;
                    let x = e.powi(f) * (1.0 - e).powi(n as i32 - f);
                    let t = sum + x;
                    comp += if sum.abs() >= x.abs() {
                        (sum - t) + x
                    } else {
                        (x - t) + sum
                    };
                    sum = t;
                }
                let exact = sum + comp;
                let got = chain_error_bound(n as u64, p(e)).unwrap().value();
                assert!((exact - got).abs() < 1e-12, "n={n} e={e}");
            }
        }
    }

    #[test]
    fn safe_length_goldens() {
        assert_eq!(safe_length(p(0.05), p(0.10)).unwrap(), 2);
        assert_eq!(safe_length(p(0.03), p(0.05)).unwrap(), 1);
        assert_eq!(safe_length(p(0.05), p(1e-6)).unwrap(), 0);
        assert!(safe_length(p(0.0), p(0.1)).is_err());
    }

    #[test]
    fn fano_goldens() {
        let v = fano_lower_bound(10, p(0.1), 10).unwrap().value();
        let oracle = 1.0 - 0.95f64.powi(10) - 1.0 / (10.0 * 10f64.ln());
        assert!((v - oracle).abs() < 1e-12 && (v - 0.358).abs() < 1e-3);
        assert_eq!(fano_lower_bound(1, p(0.01), 2).unwrap().value(), 0.0);
        for n in 1..=50 {
            for i in 1..=20 {
                let e = p(i as f64 * 0.01);
                assert!(
                    fano_lower_bound(n, e, 10).unwrap().value()
                        <= chain_error_bound(n, e).unwrap().value()
                );
            }
        }
    }

    #[test]
    fn kredundant_goldens() {
        let b = kredundant_bound(12, p(0.03), 2).unwrap().value();
        assert!((b - 0.0324).abs() < 1e-9);
        let exact = kredundant_exact(12, p(0.03), 2).unwrap().value();
        let p_maj = 3.0 * 0.03f64.powi(2) * 0.97 + 0.03f64.powi(3);
        assert!((exact - (1.0 - (1.0 - p_maj).powi(12))).abs() < 1e-12);
        assert!((exact - 0.0310).abs() < 5e-4 && exact <= b);
        assert_eq!(kredundant_bound(12, p(0.0), 2).unwrap().value(), 0.0);
        assert!(kredundant_bound(12, p(0.1), 1).is_err());
        assert_eq!(kredundant_safe_length(p(0.05), p(0.10), 2).unwrap(), 13);
        assert_eq!(kredundant_safe_length(p(0.05), p(0.10), 4).unwrap(), 80);
        assert_eq!(kredundant_safe_length(p(0.05), p(1e-9), 2).unwrap(), 0);
    }

    #[test]
    fn optimal_k_goldens() {
        assert_eq!(optimal_k(15, p(0.05), p(0.05)).unwrap(), 3);
        assert_eq!(optimal_k(1, p(1.0), p(0.05)).unwrap(), 1);
        assert_eq!(optimal_k(100, p(0.05), p(0.05)).unwrap(), 5);
        assert!(optimal_k(10, p(0.05), p(0.0)).is_err());
    }

    #[test]
    fn entropy_threshold_goldens() {
        let h = entropy_threshold(p(0.025), p(0.3)).unwrap();
        assert!((h - 0.31).abs() < 5e-3);
        let h2 = entropy_threshold(p(0.025), p(0.6)).unwrap();
        assert!((h2 - 0.154).abs() < 1e-3);
        assert!(entropy_threshold(p(1.0 - 1e-12), p(0.3)).unwrap() < 1e-10);
        assert!(entropy_threshold(p(0.0), p(0.3)).is_err());
        // 20% overestimate of the gap shifts the threshold by about 17%.
        let shift = 1.0 - entropy_threshold(p(0.025), p(0.36)).unwrap() / h;
        assert!((shift - 0.17).abs() < 0.01);
    }

    fn in_tol(a: f64, b: f64) -> bool {
        a <= b * (1.0 + PREDICATE_RTOL)
    }

    proptest::proptest! {
        #[test]
        fn safe_length_is_argmax(e in 0.001f64..0.49, d in 0.001f64..0.99) {
            let n = safe_length(p(e), p(d)).unwrap();
            proptest::prop_assert!(in_tol(chain_error_bound(n, p(e)).unwrap().value(), d));
            proptest::prop_assert!(!in_tol(chain_error_bound(n + 1, p(e)).unwrap().value(), d));
        }

        #[test]
        fn kredundant_length_is_argmax(e in 0.001f64..0.49, d in 0.001f64..0.99, k in 2u64..8) {
            let n = kredundant_safe_length(p(e), p(d), k).unwrap();
            let raw = |n| kredundant_bound_raw(n, p(e), k).unwrap();
            proptest::prop_assert!(in_tol(raw(n), d));
            proptest::prop_assert!(!in_tol(raw(n + 1), d));
        }

        #[test]
        fn chain_error_monotone(n in 1u64..200, e1 in 0.0f64..0.49, e2 in 0.0f64..0.49) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a = chain_error_bound(n, p(lo)).unwrap().value();
            proptest::prop_assert!(a <= chain_error_bound(n, p(hi)).unwrap().value());
            proptest::prop_assert!(a <= chain_error_bound(n + 1, p(lo)).unwrap().value());
        }
    }
}
