use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::StrategySpec;
use crate::error::{invalid, Result};
use crate::prob::Probability;
use crate::stats::r_squared;

/// Scaling exponent with a flag for the degenerate two-way beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingExponent {
    pub alpha: f64,
    pub degenerate: bool,
}

pub fn scaling_exponent(strategy: StrategySpec) -> Result<ScalingExponent> {
    strategy.validate()?;
    let (alpha, degenerate) = match strategy {
        StrategySpec::BestOfNPerfect => (1.0, false),
        StrategySpec::BestOfNImperfect { eps_v } => (1.0 - eps_v, false),
        StrategySpec::Beam { width: 2 } => (0.0, true),
        StrategySpec::Beam { width } => {
            let b = f64::from(width);
            ((b - 1.0).ln() / b.ln(), false)
        }
        StrategySpec::SingleChainVerified { eps, i_step } => (1.0 / (1.0 + eps / i_step), false),
    };
    Ok(ScalingExponent { alpha, degenerate })
}

/// `1 - exp(-c C^alpha)`.
pub fn success_curve(compute: f64, c: f64, alpha: f64) -> Result<Probability> {
    if !(compute >= 0.0) {
        return Err(invalid("compute", "must be non-negative"));
    }
    if !(c > 0.0) {
        return Err(invalid("c", "must be positive"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1]"));
    }
    Ok(Probability::clamped(-(-c * compute.powf(alpha)).exp_m1()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub c: f64,
    pub alpha: f64,
    pub r_squared: f64,
}

fn model(x: f64, c: f64, a: f64) -> f64 {
    1.0 - (-c * x.powf(a)).exp()
}

fn sse(points: &[(f64, f64)], c: f64, a: f64) -> f64 {
    points
        .iter()
        .map(|&(x, y)| (y - model(x, c, a)).powi(2))
        .sum()
}

/// Nonlinear least squares fit of `1 - exp(-c C^alpha)`.
///
/// A log-spaced grid over `(c, alpha)` picks the start; Levenberg-Marquardt
/// in `(ln c, alpha)` refines it.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(invalid("points", "need at least 4"));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    if xs.iter().any(|&x| !(x > 0.0)) {
        return Err(invalid("points", "compute values must be positive"));
    }
    if points.iter().any(|p| !(0.0..=1.0).contains(&p.1)) {
        return Err(invalid("points", "success rates must lie in [0, 1]"));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < points.len() {
        return Err(invalid("points", "compute values must be distinct"));
    }
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(invalid("points", "success rates are constant"));
    }

    let mut best = (f64::INFINITY, 1.0, 0.5);
    for i in 0..=80 {
        let c = 10f64.powf(-6.0 + 8.0 * i as f64 / 80.0);
        for j in 1..=60 {
            let a = 1.5 * j as f64 / 60.0;
            let s = sse(points, c, a);
            if s < best.0 {
                best = (s, c, a);
            }
        }
    }

    let (mut s, mut u, mut a) = (best.0, best.1.ln(), best.2);
    let mut mu = 1e-3;
    for _ in 0..500 {
        let c = u.exp();
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for &(x, y) in points {
            let xa = x.powf(a);
            let e = (-c * xa).exp();
            let r = y - (1.0 - e);
            // derivatives of the model in (ln c, alpha)
            let j = Vector2::new(e * c * xa, e * c * xa * x.ln());
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let damped =
                jtj + Matrix2::from_diagonal(&jtj.diagonal()) * mu + Matrix2::identity() * 1e-300;
            let Some(step) = damped.lu().solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let (nu, na) = (u + step[0], a + step[1]);
            let ns = if na > 0.0 {
                sse(points, nu.exp(), na)
            } else {
                f64::INFINITY
            };
            if ns < s {
                let rel = (s - ns) / s.max(1e-300);
                u = nu;
                a = na;
                s = ns;
                mu = (mu / 3.0).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }

    let c = u.exp();
    let pred: Vec<f64> = points.iter().map(|&(x, _)| model(x, c, a)).collect();
    Ok(ScalingFit {
        c,
        alpha: a,
        r_squared: r_squared(&ys, &pred),
    })
}

/// Residual sum of squares of the best per-trajectory `(amplitude, floor)`
/// for a shared decay factor `r = 1 - gamma`.
fn gap_sse(trajectories: &[Vec<f64>], gamma: f64) -> f64 {
    let r = 1.0 - gamma;
    let mut total = 0.0;
    for h in trajectories {
        let n = h.len() as f64;
        let xs: Vec<f64> = (0..h.len()).map(|t| r.powi(t as i32)).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = h.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(h).map(|(x, y)| (x - mx) * (y - my)).sum();
        let syy: f64 = h.iter().map(|y| (y - my).powi(2)).sum();
        total += if sxx > 0.0 {
            syy - sxy * sxy / sxx
        } else {
            syy
        };
    }
    total
}

/// Shared spectral gap of exponentially decaying entropy trajectories.
///
/// Fits `H_t = A_i (1 - gamma)^t + B_i` with one `gamma` across all
/// trajectories. The gap is scanned on a grid over `(0, 1]` and polished by
/// golden-section search.
pub fn estimate_spectral_gap(trajectories: &[Vec<f64>]) -> Result<Probability> {
    if trajectories.is_empty() {
        return Err(invalid("trajectories", "need at least one"));
    }
    if trajectories.iter().any(|t| t.len() < 3) {
        return Err(invalid("trajectories", "each needs at least 3 points"));
    }
    if trajectories.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid("trajectories", "values must be finite"));
    }
    if trajectories.iter().all(|t| t.iter().all(|&x| x == t[0])) {
        return Err(invalid(
            "trajectories",
            "all constant; gap is unidentifiable",
        ));
    }
    const GRID: usize = 1000;
    let mut best = (f64::INFINITY, 1);
    for i in 1..=GRID {
        let s = gap_sse(trajectories, i as f64 / GRID as f64);
        if s < best.0 {
            best = (s, i);
        }
    }
    let mut lo = (best.1 as f64 - 1.0) / GRID as f64;
    let mut hi = ((best.1 + 1) as f64 / GRID as f64).min(1.0);
    lo = lo.max(1e-9);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (gap_sse(trajectories, x1), gap_sse(trajectories, x2));
    for _ in 0..200 {
        if hi - lo < 1e-13 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = gap_sse(trajectories, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = gap_sse(trajectories, x2);
        }
    }
    let g = 0.5 * (lo + hi);
    let g = if gap_sse(trajectories, 1.0) <= gap_sse(trajectories, g) {
        1.0
    } else {
        g
    };
    Ok(Probability::clamped(g.max(f64::MIN_POSITIVE)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Binomial, Distribution, Normal};

    #[test]
    fn exponent_goldens() {
        let a = scaling_exponent(StrategySpec::BestOfNImperfect { eps_v: 0.06 }).unwrap();
        assert!((a.alpha - 0.94).abs() < 1e-12);
        assert_eq!(
            scaling_exponent(StrategySpec::BestOfNPerfect)
                .unwrap()
                .alpha,
            1.0
        );
        let b = scaling_exponent(StrategySpec::Beam { width: 4 }).unwrap();
        assert!((b.alpha - 0.792).abs() < 1e-3);
        let b2 = scaling_exponent(StrategySpec::Beam { width: 2 }).unwrap();
        assert!(b2.degenerate && b2.alpha == 0.0);
        assert!(scaling_exponent(StrategySpec::Beam { width: 1 }).is_err());
        let s = scaling_exponent(StrategySpec::SingleChainVerified {
            eps: 0.1,
            i_step: 0.4,
        })
        .unwrap();
        assert!((s.alpha - 0.8).abs() < 1e-12);
    }

    #[test]
    fn success_curve_limits() {
        assert_eq!(success_curve(0.0, 0.5, 0.7).unwrap().value(), 0.0);
        assert!(success_curve(1e12, 0.5, 0.7).unwrap().value() > 1.0 - 1e-12);
        assert!(success_curve(3.0, 0.5, 0.7).unwrap() < success_curve(4.0, 0.5, 0.7).unwrap());
    }

    fn grid() -> Vec<f64> {
        vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
    }

    #[test]
    fn noiseless_recovery() {
        let pts: Vec<_> = grid()
            .into_iter()
            .map(|x| (x, model(x, 0.5, 0.7)))
            .collect();
        let f = fit_scaling(&pts).unwrap();
        assert!(
            (f.c - 0.5).abs() < 1e-3 && (f.alpha - 0.7).abs() < 1e-3,
            "{f:?}"
        );
        assert!(f.r_squared > 0.9999);
    }

    #[test]
    fn noisy_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<_> = grid()
            .into_iter()
            .map(|x| {
                let k = Binomial::new(10_000, model(x, 0.3, 0.68))
                    .unwrap()
                    .sample(&mut rng);
                (x, k as f64 / 10_000.0)
            })
            .collect();
        let f = fit_scaling(&pts).unwrap();
        assert!((f.alpha - 0.68).abs() < 0.05, "{f:?}");
        assert!(f.r_squared > 0.99);
    }

    #[test]
    fn fit_rejects_degenerate() {
        assert!(fit_scaling(&[(1.0, 0.1), (2.0, 0.2), (3.0, 0.3)]).is_err());
        assert!(fit_scaling(&[(1.0, 0.1), (1.0, 0.2), (3.0, 0.3), (4.0, 0.4)]).is_err());
    }

    fn geometric(h0: f64, floor: f64, g: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|t| h0 * (1.0 - g).powi(t as i32) + floor)
            .collect()
    }

    #[test]
    fn gap_noiseless() {
        let t = vec![geometric(1.38, 0.05, 0.3, 25), geometric(0.9, 0.0, 0.3, 12)];
        let g = estimate_spectral_gap(&t).unwrap().value();
        assert!((g - 0.3).abs() < 1e-6, "{g}");
    }

    #[test]
    fn gap_with_multiplicative_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let t: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                geometric(1.38, 0.02, 0.3, 30)
                    .into_iter()
                    .map(|h| h * (1.0 + noise.sample(&mut rng)))
                    .collect()
            })
            .collect();
        let g = estimate_spectral_gap(&t).unwrap().value();
        assert!((g - 0.3).abs() < 0.05, "{g}");
    }

    #[test]
    fn gap_rejects_constant() {
        assert!(estimate_spectral_gap(&[vec![1.0; 5]]).is_err());
        assert!(estimate_spectral_gap(&[vec![1.0, 0.5]]).is_err());
    }
}
