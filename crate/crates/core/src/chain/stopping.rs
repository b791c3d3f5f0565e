use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::prob::{Probability, Seed};
use crate::report::SimReport;
use crate::seed::run_trials;
use crate::stats::entropy_nats;

const ROW_TOL: f64 = 1e-12;
const MAX_EXACT_STATES: usize = 64;
const MAX_ORACLE_HORIZON: u64 = 200;

/// Absorbing Markov chain over reasoning states.
///
/// Absorbing states carry an answer label through `readout`. The remaining
/// states are split into `correct_states` and `error_states`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    pub n_states: usize,
    pub kernel: Vec<Vec<f64>>,
    pub correct_states: Vec<usize>,
    pub error_states: Vec<usize>,
    pub absorbing_states: Vec<usize>,
    pub start_state: usize,
    pub readout: BTreeMap<usize, usize>,
    pub answer_space: usize,
    /// Label of the right answer; used only to score accuracy.
    pub correct_label: usize,
}

impl ChainModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        if n == 0 {
            return Err(invalid("n_states", "must be positive"));
        }
        if self.kernel.len() != n || self.kernel.iter().any(|r| r.len() != n) {
            return Err(invalid("kernel", format!("must be {n}x{n}")));
        }
        for (i, row) in self.kernel.iter().enumerate() {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(invalid(
                    "kernel",
                    format!("row {i} has an entry outside [0, 1]"),
                ));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(invalid("kernel", format!("row {i} sums to {s}")));
            }
        }
        let mut role = vec![0u8; n];
        for (set, tag) in [
            (&self.correct_states, 1u8),
            (&self.error_states, 2),
            (&self.absorbing_states, 3),
        ] {
            for &s in set {
                if s >= n {
                    return Err(invalid("states", format!("index {s} out of range")));
                }
                if role[s] != 0 {
                    return Err(invalid("states", format!("state {s} listed twice")));
                }
                role[s] = tag;
            }
        }
        if let Some(s) = role.iter().position(|&r| r == 0) {
            return Err(invalid("states", format!("state {s} has no role")));
        }
        for &a in &self.absorbing_states {
            if self.kernel[a][a] != 1.0 {
                return Err(invalid(
                    "kernel",
                    format!("absorbing row {a} is not identity"),
                ));
            }
            match self.readout.get(&a) {
                Some(&y) if y < self.answer_space => {}
                _ => {
                    return Err(invalid(
                        "readout",
                        format!("absorbing state {a} lacks a valid label"),
                    ))
                }
            }
        }
        if self.answer_space < 2 {
            return Err(invalid("answer_space", "must be at least 2"));
        }
        if self.correct_label >= self.answer_space {
            return Err(invalid("correct_label", "outside the answer space"));
        }
        if self.start_state >= n || role[self.start_state] == 2 {
            return Err(invalid(
                "start_state",
                "must be a correct or absorbing state",
            ));
        }
        Ok(())
    }

    fn is_absorbing(&self) -> Vec<bool> {
        let mut v = vec![false; self.n_states];
        for &a in &self.absorbing_states {
            v[a] = true;
        }
        v
    }

    /// Probability that the chain is eventually absorbed with each label,
    /// from every state. Solves `(I - Q) X = R` on the transient block.
    pub fn absorption(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let absorbing = self.is_absorbing();
        let transient: Vec<usize> = (0..self.n_states).filter(|&s| !absorbing[s]).collect();
        let m = transient.len();
        let ny = self.answer_space;
        let mut out = vec![vec![0.0; ny]; self.n_states];
        for &a in &self.absorbing_states {
            out[a][self.readout[&a]] = 1.0;
        }
        if m == 0 {
            return Ok(out);
        }
        let mut iq = DMatrix::<f64>::identity(m, m);
        let mut r = DMatrix::<f64>::zeros(m, ny);
        for (i, &s) in transient.iter().enumerate() {
            for (j, &t) in transient.iter().enumerate() {
                iq[(i, j)] -= self.kernel[s][t];
            }
            for &a in &self.absorbing_states {
                r[(i, self.readout[&a])] += self.kernel[s][a];
            }
        }
        let x = iq
            .lu()
            .solve(&r)
            .ok_or_else(|| invalid("kernel", "some transient state never reaches an answer"))?;
        for (i, &s) in transient.iter().enumerate() {
            let row: Vec<f64> = (0..ny).map(|y| x[(i, y)].clamp(0.0, 1.0)).collect();
            let mass: f64 = row.iter().sum();
            if (mass - 1.0).abs() > 1e-8 {
                return Err(invalid(
                    "kernel",
                    format!("state {s} reaches an answer with probability {mass}"),
                ));
            }
            out[s] = row;
        }
        Ok(out)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Parameters of the entropy-threshold stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingConfig {
    pub lambda: Probability,
    pub gamma_hat: Probability,
    #[serde(default = "default_ema")]
    pub ema_coeff: Probability,
    pub n_max: u64,
}

fn default_ema() -> Probability {
    Probability::new(0.3).expect("constant")
}

impl StoppingConfig {
    pub fn new(lambda: f64, gamma_hat: f64, n_max: u64) -> Result<Self> {
        let c = StoppingConfig {
            lambda: Probability::named("lambda", lambda)?,
            gamma_hat: Probability::named("gamma_hat", gamma_hat)?,
            ema_coeff: default_ema(),
            n_max,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.lambda.value();
        if l <= 0.0 || l >= 1.0 {
            return Err(invalid("lambda", "must lie strictly inside (0, 1)"));
        }
        if self.gamma_hat.value() <= 0.0 {
            return Err(invalid("gamma_hat", "must be positive"));
        }
        if self.n_max == 0 {
            return Err(invalid("n_max", "must be positive"));
        }
        Ok(())
    }

    pub fn threshold(&self) -> Result<f64> {
        super::entropy_threshold(self.lambda, self.gamma_hat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingOutcome {
    pub mean_loss: f64,
    pub mean_tau: f64,
    pub accuracy: SimReport,
    pub loss: SimReport,
}

/// One step of a recorded stopping trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub trial: u64,
    pub step: u64,
    pub state: usize,
    pub entropy: f64,
    pub smoothed_entropy: f64,
    pub stopped: bool,
}

struct Prepared {
    cumulative: Vec<Vec<f64>>,
    absorbing: Vec<bool>,
    answers: Vec<Vec<f64>>,
    entropy: Vec<f64>,
}

fn prepare(model: &ChainModel) -> Result<Prepared> {
    let answers = model.absorption()?;
    let entropy = answers.iter().map(|a| entropy_nats(a)).collect();
    let cumulative = model
        .kernel
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            row.iter()
                .map(|&p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();
    Ok(Prepared {
        cumulative,
        absorbing: model.is_absorbing(),
        answers,
        entropy,
    })
}

fn step(cum: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Entropy-threshold stopping on a fully observed chain.
///
/// The posterior over the final answer at state `s` is the exact absorption
/// distribution `a(s)`. Its entropy is smoothed by an exponential moving
/// average started at `ln |Y|`; the rule stops once the average falls to
/// `h*`, once the chain is absorbed, or at `n_max`. The prediction is the
/// posterior mode and the per-trial loss is `1 - max a(s_tau) + lambda tau`,
/// the conditional expectation of `1[prediction != eventual answer]`.
pub fn run_stopping(
    model: &ChainModel,
    config: &StoppingConfig,
    trials: u64,
    seed: Seed,
) -> Result<StoppingOutcome> {
    run_stopping_traced(model, config, trials, seed, 0).map(|(o, _)| o)
}

/// [`run_stopping`] that also records the first `trace_trials` trajectories.
pub fn run_stopping_traced(
    model: &ChainModel,
    config: &StoppingConfig,
    trials: u64,
    seed: Seed,
    trace_trials: u64,
) -> Result<(StoppingOutcome, Vec<TraceRow>)> {
    config.validate()?;
    if trials == 0 {
        return Err(invalid("trials", "must be positive"));
    }
    let prep = prepare(model)?;
    let h_star = config.threshold()?;
    let lambda = config.lambda.value();
    let w = config.ema_coeff.value();
    let h0 = (model.answer_space as f64).ln();

    let results = run_trials(seed, trials, |i, rng| {
        let mut s = model.start_state;
        let mut smoothed = h0;
        let mut trace = Vec::new();
        let keep = i < trace_trials;
        let mut t = 0u64;
        loop {
            let h = prep.entropy[s];
            smoothed = w * h + (1.0 - w) * smoothed;
            let stop = prep.absorbing[s] || smoothed <= h_star || t >= config.n_max;
            if keep {
                trace.push(TraceRow {
                    trial: i,
                    step: t,
                    state: s,
                    entropy: h,
                    smoothed_entropy: smoothed,
                    stopped: stop,
                });
            }
            if stop {
                break;
            }
            s = step(&prep.cumulative[s], rng);
            t += 1;
        }
        let a = &prep.answers[s];
        let pred = argmax(a);
        let loss = 1.0 - a[pred] + lambda * t as f64;
        (loss, t, pred == model.correct_label, trace)
    });

    let losses: Vec<f64> = results.iter().map(|r| r.0).collect();
    let tau_sum: u64 = results.iter().map(|r| r.1).sum();
    let correct = results.iter().filter(|r| r.2).count() as u64;
    let loss = SimReport::mean(&losses, seed)?;
    let outcome = StoppingOutcome {
        mean_loss: loss.estimate,
        mean_tau: tau_sum as f64 / trials as f64,
        accuracy: SimReport::proportion(correct, trials, seed)?,
        loss,
    };
    let trace = results.into_iter().flat_map(|r| r.3).collect();
    Ok((outcome, trace))
}

fn check_exact_size(model: &ChainModel, horizon: u64) -> Result<()> {
    if model.n_states > MAX_EXACT_STATES {
        return Err(Error::Oversize(format!(
            "{} states exceeds {MAX_EXACT_STATES}",
            model.n_states
        )));
    }
    if horizon > MAX_ORACLE_HORIZON {
        return Err(Error::Oversize(format!(
            "horizon {horizon} exceeds {MAX_ORACLE_HORIZON}"
        )));
    }
    Ok(())
}

/// Minimal expected loss over all stopping times bounded by `horizon`,
/// by backward induction on the Snell envelope.
pub fn stopping_oracle(model: &ChainModel, lambda: Probability, horizon: u64) -> Result<f64> {
    check_exact_size(model, horizon)?;
    let answers = model.absorption()?;
    let n = model.n_states;
    let l = lambda.value();
    let stop: Vec<f64> = answers.iter().map(|a| 1.0 - a[argmax(a)]).collect();
    let mut v = stop.clone();
    for _ in 0..horizon {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                let cont = l + (0..n).map(|t| model.kernel[s][t] * v[t]).sum::<f64>();
                stop[s].min(cont)
            })
            .collect();
        v = next;
    }
    Ok(v[model.start_state])
}

/// Expected loss of stopping at `min(horizon, absorption time)`, computed by
/// propagating the state distribution.
pub fn fixed_horizon_loss(model: &ChainModel, lambda: Probability, horizon: u64) -> Result<f64> {
    check_exact_size(model, horizon)?;
    let answers = model.absorption()?;
    let absorbing = model.is_absorbing();
    let n = model.n_states;
    let mut dist = vec![0.0; n];
    dist[model.start_state] = 1.0;
    let mut cost = 0.0;
    for _ in 0..horizon {
        let live: f64 = (0..n).filter(|&s| !absorbing[s]).map(|s| dist[s]).sum();
        cost += lambda.value() * live;
        let mut next = vec![0.0; n];
        for s in 0..n {
            if dist[s] == 0.0 {
                continue;
            }
            for t in 0..n {
                next[t] += dist[s] * model.kernel[s][t];
            }
        }
        dist = next;
    }
    let terminal: f64 = (0..n)
        .map(|s| dist[s] * (1.0 - answers[s][argmax(&answers[s])]))
        .sum();
    Ok(cost + terminal)
}

/// A 20-state chain with spectral gap exactly `gamma`.
///
/// Four answer ladders of four levels each feed four absorbing answers. Every
/// transient state holds with probability `1 - gamma`; otherwise it climbs
/// one level (or absorbs from the top), switching to another ladder with a
/// level-dependent probability drawn from `seed`. The chain starts at the
/// bottom of the correct ladder.
pub fn planted_gap_chain(gamma: f64, seed: Seed) -> Result<ChainModel> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", "must lie in (0, 1]"));
    }
    const ANSWERS: usize = 4;
    const LEVELS: usize = 4;
    const BASE_SWITCH: [f64; LEVELS] = [0.5, 0.3, 0.1, 0.02];
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let switch: Vec<f64> = BASE_SWITCH
        .iter()
        .map(|&b| b * rng.random_range(0.8..1.2))
        .collect();
    let correct = rng.random_range(0..ANSWERS);
    let transient = ANSWERS * LEVELS;
    let n = transient + ANSWERS;
    let idx = |y: usize, l: usize| y * LEVELS + l;
    let mut kernel = vec![vec![0.0; n]; n];
    for y in 0..ANSWERS {
        for l in 0..LEVELS {
            let s = idx(y, l);
            kernel[s][s] = 1.0 - gamma;
            let target = |z: usize| {
                if l + 1 < LEVELS {
                    idx(z, l + 1)
                } else {
                    transient + z
                }
            };
            for z in 0..ANSWERS {
                let w = if z == y {
                    1.0 - switch[l]
                } else {
                    switch[l] / (ANSWERS - 1) as f64
                };
                kernel[s][target(z)] += gamma * w;
            }
        }
    }
    for a in transient..n {
        kernel[a][a] = 1.0;
    }
    let model = ChainModel {
        n_states: n,
        kernel,
        correct_states: (0..LEVELS).map(|l| idx(correct, l)).collect(),
        error_states: (0..ANSWERS)
            .filter(|&y| y != correct)
            .flat_map(|y| (0..LEVELS).map(move |l| idx(y, l)))
            .collect(),
        absorbing_states: (transient..n).collect(),
        start_state: idx(correct, 0),
        readout: (0..ANSWERS).map(|y| (transient + y, y)).collect(),
        answer_space: ANSWERS,
        correct_label: correct,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    fn absorbed_pair(label: usize) -> ChainModel {
        ChainModel {
            n_states: 2,
            kernel: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            correct_states: vec![],
            error_states: vec![],
            absorbing_states: vec![0, 1],
            start_state: 0,
            readout: [(0, label), (1, 1 - label)].into_iter().collect(),
            answer_space: 2,
            correct_label: 0,
        }
    }

    #[test]
    fn already_absorbed_stops_at_zero() {
        let cfg = StoppingConfig::new(0.025, 0.3, 50).unwrap();
        for label in [0, 1] {
            let m = absorbed_pair(label);
            let o = run_stopping(&m, &cfg, 200, Seed(1)).unwrap();
            assert_eq!(o.mean_tau, 0.0);
            assert_eq!(o.mean_loss, 0.0);
            assert_eq!(o.accuracy.estimate, if label == 0 { 1.0 } else { 0.0 });
            assert_eq!(stopping_oracle(&m, p(0.025), 10).unwrap(), 0.0);
        }
    }

    #[test]
    fn planted_chain_gap_is_exact() {
        let m = planted_gap_chain(0.3, Seed(7)).unwrap();
        let k = DMatrix::from_fn(20, 20, |i, j| m.kernel[i][j]);
        let mut eig: Vec<f64> = k.complex_eigenvalues().iter().map(|z| z.re).collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let second = eig.iter().copied().find(|&x| x < 1.0 - 1e-9).unwrap();
        // Jordan blocks make the numeric spectrum inexact; check structure too.
        assert!((1.0 - second - 0.3).abs() < 1e-3, "{second}");
        let level = |s: usize| s % 4;
        for s in 0..16 {
            assert!((m.kernel[s][s] - 0.7).abs() < 1e-15);
            for t in 0..16 {
                if t != s && m.kernel[s][t] > 0.0 {
                    assert_eq!(level(t), level(s) + 1);
                }
            }
        }
    }

    #[test]
    fn absorption_rows_are_distributions() {
        let m = planted_gap_chain(0.3, Seed(2)).unwrap();
        for a in m.absorption().unwrap() {
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_beats_rule_and_fixed_horizons() {
        let m = planted_gap_chain(0.3, Seed(3)).unwrap();
        let cfg = StoppingConfig::new(0.025, 0.3, 100).unwrap();
        let oracle = stopping_oracle(&m, cfg.lambda, 100).unwrap();
        let rule = run_stopping(&m, &cfg, 20_000, Seed(3)).unwrap();
        assert!(oracle <= rule.loss.ci_high, "{oracle} vs {rule:?}");
        for h in [0, 1, 5, 10, 20, 50, 100] {
            assert!(oracle <= fixed_horizon_loss(&m, cfg.lambda, h).unwrap() + 1e-12);
        }
    }

    #[test]
    fn high_cost_stops_immediately() {
        let m = planted_gap_chain(0.3, Seed(5)).unwrap();
        let stop_now = fixed_horizon_loss(&m, p(0.999), 0).unwrap();
        let oracle = stopping_oracle(&m, p(0.999), 50).unwrap();
        assert!((oracle - stop_now).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_models() {
        let mut m = planted_gap_chain(0.3, Seed(1)).unwrap();
        m.kernel[0][0] += 0.01;
        assert!(m.validate().is_err());
        let mut m = planted_gap_chain(0.3, Seed(1)).unwrap();
        m.start_state = m.error_states[0];
        assert!(m.validate().is_err());
        // A closed transient loop never reaches an answer.
        let trap = ChainModel {
            n_states: 3,
            kernel: vec![
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            correct_states: vec![0, 1],
            error_states: vec![],
            absorbing_states: vec![2],
            start_state: 0,
            readout: [(2, 0)].into_iter().collect(),
            answer_space: 2,
            correct_label: 0,
        };
        assert!(trap.absorption().is_err());
        let big = ChainModel {
            n_states: 65,
            ..absorbed_pair(0)
        };
        assert!(matches!(
            stopping_oracle(&big, p(0.1), 5),
            Err(Error::Oversize(_))
        ));
    }

    #[test]
    fn trace_rows_end_with_stop() {
        let m = planted_gap_chain(0.3, Seed(8)).unwrap();
        let cfg = StoppingConfig::new(0.025, 0.3, 100).unwrap();
        let (_, rows) = run_stopping_traced(&m, &cfg, 50, Seed(8), 3).unwrap();
        for t in 0..3 {
            let r: Vec<_> = rows.iter().filter(|r| r.trial == t).collect();
            assert!(r.last().unwrap().stopped);
            assert!(r[..r.len() - 1].iter().all(|x| !x.stopped));
        }
    }
}
