use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prob::{Probability, Seed};
use crate::seed::run_trials;
use crate::stats::r_squared;

const MAX_DIM: u32 = 64;
const MAX_GENERATIONS: u32 = 200;
const RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CollapseMode {
    Replacement,
    Accumulation { rho: Probability },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    pub dim: u32,
    pub d_eff: f64,
    pub n_per_gen: u64,
    pub generations: u32,
    pub mode: CollapseMode,
    pub n0: u64,
}

impl CollapseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(invalid("dim", format!("must lie in 1..={MAX_DIM}")));
        }
        if self.generations == 0 || self.generations > MAX_GENERATIONS {
            return Err(invalid(
                "generations",
                format!("must lie in 1..={MAX_GENERATIONS}"),
            ));
        }
        if self.n_per_gen <= self.dim as u64 {
            return Err(invalid(
                "n_per_gen",
                "must exceed dim or the fitted covariance is singular",
            ));
        }
        if !(self.d_eff > 0.0) || self.n0 == 0 {
            return Err(invalid("d_eff", "d_eff and n0 must be positive"));
        }
        if let CollapseMode::Accumulation { rho } = self.mode {
            if rho.value() <= 0.0 {
                return Err(invalid("rho", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    fn real_per_gen(&self) -> u64 {
        match self.mode {
            CollapseMode::Replacement => 0,
            CollapseMode::Accumulation { rho } => {
                (rho.value() * self.n_per_gen as f64).round() as u64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapsePoint {
    pub generation: u32,
    pub kl: f64,
}

/// KL(N(mu0, s0) || N(mu1, s1)).
pub fn collapse_kl(
    mu0: &DVector<f64>,
    s0: &DMatrix<f64>,
    mu1: &DVector<f64>,
    s1: &DMatrix<f64>,
) -> Result<f64> {
    let k = mu0.len();
    if s0.shape() != (k, k) || s1.shape() != (k, k) || mu1.len() != k {
        return Err(invalid("dim", "mean and covariance shapes disagree"));
    }
    let c0 = s0.clone().cholesky().ok_or_else(not_pd)?;
    let c1 = s1.clone().cholesky().ok_or_else(not_pd)?;
    let ln_det = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
    };
    let trace = c1.solve(s0).trace();
    let diff = mu1 - mu0;
    let maha = diff.dot(&c1.solve(&diff));
    Ok((0.5 * (trace + maha - k as f64 + ln_det(&c1) - ln_det(&c0))).max(0.0))
}

fn not_pd() -> Error {
    invalid("covariance", "not positive definite")
}

/// One self-training trajectory starting from the standard normal.
pub fn simulate_collapse(cfg: &CollapseConfig, seed: Seed) -> Result<Vec<CollapsePoint>> {
    cfg.validate()?;
    trajectory(cfg, &mut ChaCha8Rng::seed_from_u64(seed.0))
}

/// Trajectories for `seeds` derived trial seeds, in trial order.
pub fn simulate_collapse_many(
    cfg: &CollapseConfig,
    seeds: u64,
    master: Seed,
) -> Result<Vec<Vec<CollapsePoint>>> {
    cfg.validate()?;
    run_trials(master, seeds, |_, rng| trajectory(cfg, rng))
        .into_iter()
        .collect()
}

/// Mean KL per generation across trajectories of equal length.
pub fn mean_trajectory(runs: &[Vec<CollapsePoint>]) -> Vec<f64> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|g| runs.iter().map(|r| r[g].kl).sum::<f64>() / runs.len() as f64)
        .collect()
}

/// Least-squares `c0 + c1 g + c2 g^2` through a trajectory indexed by
/// generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub coeffs: [f64; 3],
    pub r_squared: f64,
}

pub fn quadratic_fit(ys: &[f64]) -> Result<QuadraticFit> {
    if ys.len() < 3 {
        return Err(invalid("trajectory", "need at least 3 points"));
    }
    let x = DMatrix::from_fn(ys.len(), 3, |i, j| (i as f64).powi(j as i32));
    let y = DVector::from_column_slice(ys);
    let c = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| invalid("trajectory", e.to_string()))?;
    let pred = &x * &c;
    Ok(QuadraticFit {
        coeffs: [c[0], c[1], c[2]],
        r_squared: r_squared(ys, pred.as_slice()),
    })
}

/// Mean of the last `fraction` of a trajectory.
pub fn plateau(ys: &[f64], fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("fraction", "must lie in (0, 1]"));
    }
    let k = ((ys.len() as f64 * fraction).ceil() as usize).max(1);
    if ys.is_empty() {
        return Err(invalid("trajectory", "empty"));
    }
    let tail = &ys[ys.len() - k.min(ys.len())..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

fn trajectory(cfg: &CollapseConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CollapsePoint>> {
    let k = cfg.dim as usize;
    let n = cfg.n_per_gen as usize;
    let real = cfg.real_per_gen() as usize;
    let mu0 = DVector::<f64>::zeros(k);
    let s0 = DMatrix::<f64>::identity(k, k);

    let mut mu = mu0.clone();
    let mut sigma = s0.clone();
    let mut out = vec![CollapsePoint {
        generation: 0,
        kl: 0.0,
    }];
    let mut x = DMatrix::<f64>::zeros(k, n);
    for g in 1..=cfg.generations {
        let l = sigma.clone().cholesky().ok_or_else(not_pd)?.l();
        for j in 0..n {
            let z = DVector::<f64>::from_fn(k, |_, _| StandardNormal.sample(rng));
            let col = if j < real { z } else { &mu + &l * z };
            x.set_column(j, &col);
        }
        mu = x.column_mean();
        let centred = &x - &mu * DVector::<f64>::repeat(n, 1.0).transpose();
        sigma = (&centred * centred.transpose()) / (n as f64 - 1.0)
            + DMatrix::<f64>::identity(k, k) * RIDGE;
        out.push(CollapsePoint {
            generation: g,
            kl: collapse_kl(&mu0, &s0, &mu, &sigma)?,
        });
    }
    Ok(out)
}
