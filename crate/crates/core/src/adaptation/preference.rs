use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::PrefProblem;
use crate::error::{invalid, Result};
use crate::prob::Seed;
use crate::report::SimReport;
use crate::seed::run_trials;
use crate::stats::quantile;

const MAX_ITEMS: u32 = 50;
const SETTLED: u32 = 3;

/// Checkpoint grid and success rule for the sample-complexity search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceSettings {
    /// Independent comparison streams per trial.
    pub replicates: u32,
    /// Fraction of replicates that must order the target pair.
    pub success: f64,
    pub first_checkpoint: u64,
    pub growth: f64,
    pub max_samples: u64,
}

impl Default for PreferenceSettings {
    fn default() -> Self {
        PreferenceSettings {
            replicates: 24,
            success: 2.0 / 3.0,
            first_checkpoint: 10,
            growth: 1.1,
            max_samples: 10_000_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceOutcome {
    /// Median sample count with an order-statistic 95% interval.
    pub report: SimReport,
    pub q25: f64,
    pub q75: f64,
    /// Trials that never met the success rule within `max_samples`.
    pub censored: u64,
}

impl PreferenceOutcome {
    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

pub fn simulate_preference(
    p: &PrefProblem,
    adversarial: bool,
    trials: u64,
    seed: Seed,
) -> Result<PreferenceOutcome> {
    simulate_preference_with(p, adversarial, trials, seed, &PreferenceSettings::default())
}

/// Median number of uniformly sampled comparisons a Borda ranker needs to
/// order the middle adjacent pair.
pub fn simulate_preference_with(
    p: &PrefProblem,
    adversarial: bool,
    trials: u64,
    seed: Seed,
    s: &PreferenceSettings,
) -> Result<PreferenceOutcome> {
    p.validate()?;
    if p.n_items > MAX_ITEMS {
        return Err(invalid("n_items", format!("at most {MAX_ITEMS} items")));
    }
    if trials == 0 {
        return Err(invalid("trials", "must be positive"));
    }
    if s.replicates == 0 || !(s.success > 0.0 && s.success <= 1.0) {
        return Err(invalid(
            "replicates",
            "need replicates and a success level in (0, 1]",
        ));
    }
    if !(s.growth > 1.0) || s.first_checkpoint == 0 || s.max_samples < s.first_checkpoint {
        return Err(invalid(
            "growth",
            "checkpoint grid must grow from a positive start",
        ));
    }
    let model = PairModel::new(p, adversarial);
    let grid = checkpoints(s);
    let need = (s.success * s.replicates as f64 - 1e-9).ceil() as u32;

    // Complexity is the checkpoint after the last one that misses the
    // success level; the search stops once every replicate has been right
    // at `SETTLED` consecutive checkpoints.
    let found = run_trials(seed, trials, |_, rng| {
        let mut reps = vec![Tally::default(); s.replicates as usize];
        let mut done = 0;
        let mut answer = None;
        let mut streak = 0;
        for &m in &grid {
            let inc = m - done;
            done = m;
            let mut ok = 0;
            for t in reps.iter_mut() {
                model.advance(t, inc, rng);
                ok += t.ordered() as u32;
            }
            if ok < need {
                answer = None;
            } else if answer.is_none() {
                answer = Some(m);
            }
            streak = if ok == s.replicates { streak + 1 } else { 0 };
            if streak >= SETTLED {
                break;
            }
        }
        answer.filter(|_| streak >= SETTLED)
    });

    let censored = found.iter().filter(|x| x.is_none()).count() as u64;
    let mut xs: Vec<f64> = found
        .iter()
        .map(|x| x.unwrap_or(s.max_samples) as f64)
        .collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let half = 0.98 * n.sqrt();
    let lo = ((n / 2.0 - half).floor().max(0.0) as usize).min(xs.len() - 1);
    let hi = ((n / 2.0 + half).ceil() as usize).min(xs.len() - 1);
    Ok(PreferenceOutcome {
        report: SimReport {
            estimate: quantile(&xs, 0.5),
            ci_low: xs[lo],
            ci_high: xs[hi],
            trials,
            master_seed: seed,
        },
        q25: quantile(&xs, 0.25),
        q75: quantile(&xs, 0.75),
        censored,
    })
}

/// Whether the adversary can hold every off-target comparison of the
/// target items at exactly one half (no clipping).
pub fn adversary_is_exact(p: &PrefProblem) -> bool {
    let g = p.gamma.value();
    if g == 0.0 {
        return false;
    }
    let m = PairModel::new(p, true);
    m.others
        .iter()
        .all(|&(a, b)| (a - 0.5).abs() < 1e-12 && (b - 0.5).abs() < 1e-12)
}

fn checkpoints(s: &PreferenceSettings) -> Vec<u64> {
    let mut out = Vec::new();
    let mut x = s.first_checkpoint as f64;
    while (x.round() as u64) < s.max_samples {
        let m = x.round() as u64;
        if out.last() != Some(&m) {
            out.push(m);
        }
        x *= s.growth;
    }
    out.push(s.max_samples);
    out
}

/// Wins and comparisons of the lower (`0`) and upper (`1`) target item.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    wins: [u64; 2],
    comps: [u64; 2],
}

impl Tally {
    fn ordered(&self) -> bool {
        if self.comps[0] == 0 || self.comps[1] == 0 {
            return false;
        }
        // wins1 / comps1 > wins0 / comps0 without division
        (self.wins[1] as u128) * (self.comps[0] as u128)
            > (self.wins[0] as u128) * (self.comps[1] as u128)
    }
}

struct PairModel {
    pairs: f64,
    /// Probability that the upper target item beats the lower one.
    target: f64,
    /// For each other item: probability that the lower and the upper
    /// target item beat it.
    others: Vec<(f64, f64)>,
}

impl PairModel {
    fn new(p: &PrefProblem, adversarial: bool) -> Self {
        let n = p.n_items as usize;
        let g = p.gamma.value();
        let lower = n / 2 - 1;
        let upper = lower + 1;
        let reward = |i: usize| p.gap * i as f64;
        let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
        let prob = |a: usize, b: usize, neutralise: bool| {
            let base = (1.0 - g) * sigmoid(reward(a) - reward(b));
            let q = if neutralise && g > 0.0 {
                ((0.5 - base) / g).clamp(0.0, 1.0)
            } else {
                0.5
            };
            base + g * q
        };
        let others = (0..n)
            .filter(|&j| j != lower && j != upper)
            .map(|j| (prob(lower, j, adversarial), prob(upper, j, adversarial)))
            .collect();
        PairModel {
            pairs: (n * (n - 1) / 2) as f64,
            target: prob(upper, lower, false),
            others,
        }
    }

    fn advance(&self, t: &mut Tally, samples: u64, rng: &mut ChaCha8Rng) {
        let mut rem = samples;
        let mut pairs_left = self.pairs;
        let mut take = |rng: &mut ChaCha8Rng, rem: &mut u64| {
            let c = binomial(*rem, 1.0 / pairs_left, rng);
            pairs_left -= 1.0;
            *rem -= c;
            c
        };
        let c = take(rng, &mut rem);
        let w = binomial(c, self.target, rng);
        t.wins[1] += w;
        t.wins[0] += c - w;
        t.comps[0] += c;
        t.comps[1] += c;
        for &(p_lo, p_hi) in &self.others {
            for (side, pw) in [(0, p_lo), (1, p_hi)] {
                let c = take(rng, &mut rem);
                t.wins[side] += binomial(c, pw, rng);
                t.comps[side] += c;
            }
        }
    }
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n == 1 {
        return rng.random_bool(p) as u64;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}
