use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prob::{Probability, Seed};
use crate::seed::run_trials;

/// Synthetic step-level retrieval problem: features `(u1, u2, u3, 1)`
/// with `u ~ U[0, 1]`, retrieval pays `theta . phi + noise`, skipping
/// pays nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditEnv {
    pub theta: [f64; 4],
    pub noise_sigma: f64,
    pub horizon: u64,
}

impl BanditEnv {
    pub fn validate(&self) -> Result<()> {
        let norm = self.theta.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm <= 1.0 + 1e-12) {
            return Err(invalid("theta", "norm must be at most 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma <= 0.5) {
            return Err(invalid("noise_sigma", "must lie in [0, 0.5]"));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalAction {
    Retrieve,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditRow {
    pub step: u64,
    pub action: RetrievalAction,
    pub reward: f64,
    /// Expected regret of this step against `max(theta . phi, 0)`.
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditTrace {
    pub cumulative_regret: Vec<f64>,
    pub retrieve_fraction: f64,
    pub rows: Vec<BanditRow>,
}

impl BanditTrace {
    pub fn total_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

/// `C d sqrt(T ln(T / delta))`; zero at `T = 0`.
pub fn regret_bound(t: u64, d: u32, delta: Probability, c: f64) -> Result<f64> {
    if d == 0 || !(c > 0.0) {
        return Err(invalid("d", "d and C must be positive"));
    }
    let dl = delta.value();
    if dl <= 0.0 || dl >= 1.0 {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    if t == 0 {
        return Ok(0.0);
    }
    let t = t as f64;
    Ok(c * d as f64 * (t * (t / dl).ln()).sqrt())
}

/// LinUCB with `A = I`, `alpha = sqrt(ln(T / delta) / 2)` and threshold 0:
/// retrieve when the upper confidence bound on the retrieval reward is
/// positive, update only on retrieval.
pub fn run_bandit_retrieval(
    env: &BanditEnv,
    delta: Probability,
    seed: Seed,
) -> Result<BanditTrace> {
    env.validate()?;
    let dl = delta.value();
    if dl <= 0.0 || dl >= 1.0 {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    Ok(episode(env, dl, &mut ChaCha8Rng::seed_from_u64(seed.0)))
}

/// Mean total regret over `seeds` derived seeds.
pub fn mean_regret(env: &BanditEnv, delta: Probability, seeds: u64, master: Seed) -> Result<f64> {
    env.validate()?;
    let dl = delta.value();
    if dl <= 0.0 || dl >= 1.0 || seeds == 0 {
        return Err(invalid(
            "delta",
            "need delta in (0, 1) and at least one seed",
        ));
    }
    let totals = run_trials(master, seeds, |_, rng| episode(env, dl, rng).total_regret());
    Ok(totals.iter().sum::<f64>() / seeds as f64)
}

fn episode(env: &BanditEnv, delta: f64, rng: &mut ChaCha8Rng) -> BanditTrace {
    let theta = Vector4::from(env.theta);
    let alpha = ((env.horizon as f64 / delta).ln().max(0.0) / 2.0).sqrt();
    let noise = Normal::new(0.0, env.noise_sigma).expect("sigma validated");
    let mut a_inv = Matrix4::<f64>::identity();
    let mut b = Vector4::<f64>::zeros();
    let mut total = 0.0;
    let mut retrieved = 0u64;
    let mut cumulative = Vec::with_capacity(env.horizon as usize);
    let mut rows = Vec::with_capacity(env.horizon as usize);
    for step in 0..env.horizon {
        let phi = Vector4::new(rng.random(), rng.random(), rng.random(), 1.0);
        let mean = theta.dot(&phi);
        let theta_hat = a_inv * b;
        let width = phi.dot(&(a_inv * phi)).max(0.0).sqrt();
        let ucb = theta_hat.dot(&phi) + alpha * width;
        let (action, reward, regret) = if ucb > 0.0 {
            let r = mean + noise.sample(rng);
            // Sherman-Morrison rank-one update of A^-1
            let u = a_inv * phi;
            a_inv -= (u * u.transpose()) / (1.0 + phi.dot(&u));
            b += phi * r;
            retrieved += 1;
            (RetrievalAction::Retrieve, r, mean.max(0.0) - mean)
        } else {
            (RetrievalAction::Skip, 0.0, mean.max(0.0))
        };
        total += regret;
        cumulative.push(total);
        rows.push(BanditRow {
            step,
            action,
            reward,
            regret,
        });
    }
    BanditTrace {
        cumulative_regret: cumulative,
        retrieve_fraction: retrieved as f64 / env.horizon as f64,
        rows,
    }
}
