use rand::Rng;

use crate::error::{invalid, Result};
use crate::prob::{Probability, Seed};
use crate::report::SimReport;
use crate::seed::count_trials;

/// Monte Carlo chain error under i.i.d. Bernoulli steps.
///
/// `k = 0` runs a plain chain; `k >= 2` advances each step by majority vote
/// over `k + 1` independent candidates (a tie counts as an error).
pub fn simulate_chain(
    n: u64,
    eps: Probability,
    k: u64,
    trials: u64,
    seed: Seed,
) -> Result<SimReport> {
    if k == 1 {
        return Err(invalid("k", "must be 0 or at least 2"));
    }
    if trials < 100 {
        return Err(invalid("trials", "must be at least 100"));
    }
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let e = eps.value();
    let need = if k == 0 { 1 } else { (k + 1).div_ceil(2) };
    let voters = if k == 0 { 1 } else { k + 1 };
    let failures = count_trials(seed, trials, |_, rng| {
        (0..n).any(|_| {
            let bad = (0..voters).filter(|_| rng.random::<f64>() < e).count() as u64;
            bad >= need
        })
    });
    SimReport::proportion(failures, trials, seed)
}
