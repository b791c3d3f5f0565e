//! Binomial tails, Wilson intervals and small numeric helpers.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};
use crate::prob::Probability;

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Upper binomial tail `Pr[X >= min_successes]` for `X ~ Bin(trials, p)`.
///
/// Terms are accumulated in log space with a running log-sum-exp, so large
/// `trials` do not underflow.
pub fn binom_tail(trials: u64, min_successes: u64, p: Probability) -> Result<Probability> {
    if trials == 0 {
        return Err(invalid("trials", "must be positive"));
    }
    if min_successes > trials + 1 {
        return Err(invalid(
            "min_successes",
            format!("{min_successes} exceeds trials + 1 = {}", trials + 1),
        ));
    }
    if min_successes == 0 {
        return Ok(Probability::ONE);
    }
    if min_successes == trials + 1 {
        return Ok(Probability::ZERO);
    }
    let p = p.value();
    if p == 0.0 {
        return Ok(Probability::ZERO);
    }
    if p == 1.0 {
        return Ok(Probability::ONE);
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut acc = f64::NEG_INFINITY;
    for j in min_successes..=trials {
        let t = ln_choose(trials, j) + j as f64 * lp + (trials - j) as f64 * lq;
        acc = log_add_exp(acc, t);
    }
    Ok(Probability::clamped(acc.exp()))
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Two-sided standard normal quantile for a central `confidence` mass.
pub fn z_for_confidence(confidence: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(
    successes: u64,
    trials: u64,
    confidence: Probability,
) -> Result<(Probability, Probability)> {
    if trials == 0 {
        return Err(invalid("trials", "must be positive"));
    }
    if successes > trials {
        return Err(invalid(
            "successes",
            format!("{successes} exceeds trials = {trials}"),
        ));
    }
    let c = confidence.value();
    if c <= 0.0 || c >= 1.0 {
        return Err(invalid("confidence", "must lie strictly inside (0, 1)"));
    }
    let z = z_for_confidence(c);
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { center - half };
    let hi = if successes == trials {
        1.0
    } else {
        center + half
    };
    Ok((Probability::clamped(lo), Probability::clamped(hi)))
}

/// Sample mean and unbiased standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Linear-interpolated quantile of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi] * frac
}

/// Coefficient of determination of `pred` against `obs`.
pub fn r_squared(obs: &[f64], pred: &[f64]) -> f64 {
    let (mean, _) = mean_sd(obs);
    let sst: f64 = obs.iter().map(|y| (y - mean).powi(2)).sum();
    let sse: f64 = obs.iter().zip(pred).map(|(y, f)| (y - f).powi(2)).sum();
    if sst == 0.0 {
        if sse == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - sse / sst
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, sx) = mean_sd(&rx);
    let (my, sy) = mean_sd(&ry);
    let n = rx.len() as f64;
    let cov: f64 = rx
        .iter()
        .zip(&ry)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1.0);
    cov / (sx * sy)
}

/// Shannon entropy in nats; zero-mass entries contribute nothing.
pub fn entropy_nats(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum::<f64>()
        .max(0.0)
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return None;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) < tol * (1.0 + mid.abs()) {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
