use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prob::Probability;
use crate::stats::bisect;

/// How the verifier is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    Process,
    Outcome,
}

/// Outcome-to-process sample complexity ratio `n / ln n`, shrunk by
/// `(1 - 2 eta)^2` under label noise. `n` may be fractional.
pub fn supervision_ratio(n: f64, eta: Probability) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(invalid("n", "must be at least 2"));
    }
    let e = eta.value();
    if e >= 0.5 {
        return Err(invalid("eta", "must be below 0.5"));
    }
    Ok(n / n.ln() * (1.0 - 2.0 * e).powi(2))
}

/// Leading-order training fraction of the budget in the verifier-error
/// dominated regime.
pub fn training_fraction(n: f64, budget: f64, supervision: Supervision) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(invalid("n", "must be at least 2"));
    }
    if !(budget > 0.0) {
        return Err(invalid("budget", "must be positive"));
    }
    Ok(match supervision {
        Supervision::Process => n * n.ln() / budget,
        Supervision::Outcome => n * n / (n.ln() * budget),
    })
}

/// Outcome over process training fraction, `n / (ln n)^2`.
pub fn training_fraction_ratio(n: f64) -> Result<f64> {
    Ok(training_fraction(n, 1.0, Supervision::Outcome)?
        / training_fraction(n, 1.0, Supervision::Process)?)
}

/// Stationary split of a compute budget between verifier training and
/// inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub t_star: f64,
    pub c_star: f64,
    pub eps_v: f64,
}

impl Allocation {
    pub fn ratio(&self) -> f64 {
        self.t_star / self.c_star
    }
}

/// Solve the allocation stationarity condition by bisection on `T`.
///
/// Verifier error is modelled as `eps_v(T) = d_cot n ln T / T`; inference
/// compute is whatever the budget leaves, `C = (B - c_train T) / c_infer`.
pub fn allocation_optimum(
    budget: f64,
    c_train: f64,
    c_infer: f64,
    n: u64,
    d_cot: f64,
    c: f64,
) -> Result<Allocation> {
    for (name, v) in [
        ("budget", budget),
        ("c_train", c_train),
        ("c_infer", c_infer),
        ("d_cot", d_cot),
        ("c", c),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(invalid(name, "must be positive and finite"));
        }
    }
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let dn = d_cot * n as f64;
    let eps_v = |t: f64| dn * t.ln() / t;
    let inference = |t: f64| (budget - c_train * t) / c_infer;

    // eps_v < 1 once T / ln T exceeds d_cot n; T / ln T increases past e.
    let e = std::f64::consts::E;
    let t_lo = if dn < e {
        e
    } else {
        let mut hi = 2.0 * e;
        while hi / hi.ln() <= dn {
            hi *= 2.0;
        }
        bisect(|t| t / t.ln() - dn, e, hi, 1e-15).unwrap_or(hi) * (1.0 + 1e-9)
    };
    let t_hi = (budget - c_infer) / c_train;
    if !(t_hi > t_lo) {
        return Err(Error::Infeasible(format!(
            "budget {budget} leaves no interior split (training must exceed {t_lo:.4})"
        )));
    }
    let residual = |t: f64| {
        let cc = inference(t);
        t / cc - (c_infer / c_train) * dn * cc.ln() / (cc.powf(1.0 - eps_v(t)) * c)
    };
    let t = bisect(residual, t_lo, t_hi * (1.0 - 1e-12), 1e-14)
        .ok_or_else(|| Error::Infeasible("stationarity residual has no sign change".to_string()))?;
    let c_star = inference(t);
    Ok(Allocation {
        t_star: t,
        c_star,
        eps_v: eps_v(t),
    })
}
