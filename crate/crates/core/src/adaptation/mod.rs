//! Fine-tuning, preference learning, self-training and editing limits.

mod collapse;
mod preference;

pub use collapse::{
    collapse_kl, mean_trajectory, plateau, quadratic_fit, simulate_collapse,
    simulate_collapse_many, CollapseConfig, CollapseMode, CollapsePoint, QuadraticFit,
};
pub use preference::{
    adversary_is_exact, simulate_preference, simulate_preference_with, PreferenceOutcome,
    PreferenceSettings,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prob::Probability;

/// `c0` that places the rank ceiling at 32 for 52000 documents and
/// `d + k = 12288`.
pub fn calibrated_rank_c0() -> f64 {
    52000.0 / (12288.0 * 52000f64.ln() * 32.0)
}

/// Exponent constant of the Gaussian collapse bound.
pub const COLLAPSE_C1: f64 = 1.0 / (128.0 * std::f64::consts::PI);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub m: u64,
    pub r: u64,
    pub d: u64,
    pub k: u64,
    pub n_docs: u64,
    pub sigma_p: f64,
    pub sigma_q: f64,
    pub phi_norm_sq: f64,
    pub delta: Probability,
    pub loss_range: f64,
}

impl LoraConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m", self.m),
            ("r", self.r),
            ("d", self.d),
            ("k", self.k),
            ("n_docs", self.n_docs),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("sigma_p", self.sigma_p),
            ("sigma_q", self.sigma_q),
            ("loss_range", self.loss_range),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, "must be positive and finite"));
            }
        }
        if !(self.phi_norm_sq >= 0.0) || !self.phi_norm_sq.is_finite() {
            return Err(invalid("phi_norm_sq", "must be non-negative"));
        }
        let dl = self.delta.value();
        if dl <= 0.0 || dl >= 1.0 {
            return Err(invalid("delta", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Number of adapter parameters, `m r (d + k)`.
pub fn lora_effective_params(cfg: &LoraConfig) -> Result<u64> {
    cfg.validate()?;
    cfg.m
        .checked_mul(cfg.r)
        .and_then(|x| x.checked_mul(cfg.d + cfg.k))
        .ok_or_else(|| invalid("m", "parameter count overflows"))
}

/// KL between the isotropic Gaussian posterior and prior over adapter
/// weights.
pub fn lora_kl(cfg: &LoraConfig) -> Result<f64> {
    let q = lora_effective_params(cfg)? as f64;
    let sp2 = cfg.sigma_p * cfg.sigma_p;
    let sq2 = cfg.sigma_q * cfg.sigma_q;
    let kl = 0.5 * (q * sq2 / sp2 + cfg.phi_norm_sq / sp2 - q + q * (sp2 / sq2).ln());
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoraBound {
    pub bound: f64,
    pub kl: f64,
    pub mc_term: f64,
    pub complexity_term: f64,
    pub vacuous: bool,
}

impl LoraBound {
    /// Re-evaluate vacuity after dividing by the loss normaliser.
    pub fn normalized(mut self, normalizer: f64) -> Self {
        self.vacuous = self.bound / normalizer >= 1.0;
        self
    }
}

/// PAC-Bayes bound on the adapter's expected loss with a Monte Carlo
/// correction for the sampled posterior.
pub fn lora_bound(
    cfg: &LoraConfig,
    empirical_loss: f64,
    delta_mc: Probability,
    mc_samples: u64,
    k_eff: u64,
) -> Result<LoraBound> {
    let kl = lora_kl(cfg)?;
    if !(empirical_loss >= 0.0) {
        return Err(invalid("empirical_loss", "must be non-negative"));
    }
    let dm = delta_mc.value();
    if dm <= 0.0 || dm >= 1.0 {
        return Err(invalid("delta_mc", "must lie in (0, 1)"));
    }
    if mc_samples == 0 || k_eff == 0 {
        return Err(invalid(
            "mc_samples",
            "sample and projection counts must be positive",
        ));
    }
    let ke = k_eff as f64;
    let mc_term = cfg.loss_range.powi(2)
        * cfg.sigma_q.powi(2)
        * (2.0 * ke * (2.0 * ke / dm).ln() / mc_samples as f64).sqrt();
    let n = cfg.n_docs as f64;
    let complexity_term = ((kl + (2.0 * n.sqrt() / cfg.delta.value()).ln()) / (2.0 * n)).sqrt();
    let bound = empirical_loss + mc_term + complexity_term;
    Ok(LoraBound {
        bound,
        kl,
        mc_term,
        complexity_term,
        vacuous: bound >= 1.0,
    })
}

/// Largest rank with a non-vacuous bound, `N / (c0 (d + k) ln N)`.
pub fn rank_ceiling(d: u64, k: u64, n_docs: u64, c0: f64) -> Result<f64> {
    if n_docs < 3 {
        return Err(invalid("n_docs", "must be at least 3"));
    }
    if d == 0 || k == 0 {
        return Err(invalid("d", "dimensions must be positive"));
    }
    if !(c0 > 0.0) {
        return Err(invalid("c0", "must be positive"));
    }
    let n = n_docs as f64;
    Ok(n / (c0 * (d + k) as f64 * n.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefProblem {
    pub n_items: u32,
    pub gap: f64,
    pub gamma: Probability,
    pub target_error: Probability,
}

impl PrefProblem {
    pub fn validate(&self) -> Result<()> {
        if self.n_items < 2 {
            return Err(invalid("n_items", "must be at least 2"));
        }
        if !(self.gap > 0.0) || !self.gap.is_finite() {
            return Err(invalid("gap", "must be positive"));
        }
        if self.gamma.value() >= 0.5 {
            return Err(invalid("gamma", "must be below 0.5"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefRegime {
    WellSpecified,
    Misspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefAssessment {
    pub regime: PrefRegime,
    pub gamma_star: f64,
    pub budget: f64,
}

/// Regime and pair budget with unit constant.
pub fn pref_regime(p: &PrefProblem) -> Result<PrefAssessment> {
    pref_regime_with(p, 1.0)
}

/// Regime and pair budget; `c` scales both budget forms.
pub fn pref_regime_with(p: &PrefProblem, c: f64) -> Result<PrefAssessment> {
    p.validate()?;
    if !(c > 0.0) {
        return Err(invalid("c", "must be positive"));
    }
    let n = p.n_items as f64;
    let gamma_star = p.gap / n;
    let g = p.gamma.value();
    let (regime, budget) = if g > gamma_star {
        (PrefRegime::Misspecified, c * n * n * n.ln() / (g * g))
    } else {
        (PrefRegime::WellSpecified, c * n * n.ln() / (p.gap * p.gap))
    };
    Ok(PrefAssessment {
        regime,
        gamma_star,
        budget,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyAdvice {
    Equivalent,
    PreferRlhf,
    ComparableDegradation,
}

/// Reward-model capacity constant used when none is configured.
pub const DEFAULT_REWARD_C1: f64 = 0.1;

/// DPO versus RLHF under misspecification `gamma` with reward width `w`.
pub fn dpo_rlhf_advice(gamma: Probability, n: u64, w: u64, c1: f64) -> Result<PolicyAdvice> {
    if n == 0 || w == 0 {
        return Err(invalid("n", "n and width must be positive"));
    }
    if !(c1 > 0.0) {
        return Err(invalid("c1", "must be positive"));
    }
    let g = gamma.value();
    if g == 0.0 {
        return Ok(PolicyAdvice::Equivalent);
    }
    Ok(if w as f64 >= c1 * n as f64 / g {
        PolicyAdvice::PreferRlhf
    } else {
        PolicyAdvice::ComparableDegradation
    })
}

/// Lower bound on expected TV after `t` generations of pure replacement.
pub fn collapse_lower_bound(t: u32, d_eff: f64, n_min: u64) -> Result<Probability> {
    if !(d_eff > 0.0) {
        return Err(invalid("d_eff", "must be positive"));
    }
    if n_min == 0 {
        return Err(invalid("n_min", "must be positive"));
    }
    let t = t as f64;
    Ok(Probability::clamped(
        -(-COLLAPSE_C1 * t * t * d_eff / n_min as f64).exp_m1(),
    ))
}

/// TV lower bound for categorical and autoregressive models: mean
/// per-position entropy `h_bar` nats over `seq_len` positions and a
/// vocabulary of `vocab` tokens. `seq_len = 1` is the single-distribution
/// case.
pub fn sequence_collapse_bound(
    t: u32,
    h_bar: f64,
    seq_len: u32,
    n_min: u64,
    vocab: u64,
    c2: f64,
) -> Result<Probability> {
    let d = sequence_effective_dim(h_bar, seq_len, vocab)?;
    if n_min == 0 {
        return Err(invalid("n_min", "must be positive"));
    }
    if !(c2 >= 0.0) {
        return Err(invalid("c2", "must be non-negative"));
    }
    let t = t as f64;
    Ok(Probability::clamped(
        -(-c2 * t * t * d / n_min as f64).exp_m1(),
    ))
}

/// `h_bar seq_len / ln vocab`, the Gaussian-equivalent dimension.
pub fn sequence_effective_dim(h_bar: f64, seq_len: u32, vocab: u64) -> Result<f64> {
    if vocab < 2 {
        return Err(invalid("vocab", "must be at least 2"));
    }
    if !(h_bar >= 0.0) || h_bar > (vocab as f64).ln() * (1.0 + 1e-12) {
        return Err(invalid("h_bar", "must lie in [0, ln vocab]"));
    }
    if seq_len == 0 {
        return Err(invalid("seq_len", "must be positive"));
    }
    Ok(h_bar * seq_len as f64 / (vocab as f64).ln())
}

/// KL ceiling under accumulation with real-data fraction `rho`.
pub fn accumulation_ceiling(d_eff: f64, rho: Probability, n0: u64, c3: f64) -> Result<f64> {
    if rho.value() <= 0.0 {
        return Err(invalid("rho", "must be positive"));
    }
    if !(d_eff > 0.0) || n0 == 0 {
        return Err(invalid("d_eff", "d_eff and n0 must be positive"));
    }
    if !(c3 >= 0.0) {
        return Err(invalid("c3", "must be non-negative"));
    }
    let pi2 = std::f64::consts::PI.powi(2);
    Ok(c3 * d_eff * pi2 / (6.0 * rho.value() * n0 as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditConfig {
    pub d: u64,
    pub alpha: f64,
    pub c: f64,
    pub eta_mag: f64,
    pub tau: f64,
    pub rank: u32,
    pub layers: u32,
}

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.rank == 0 || self.layers == 0 {
            return Err(invalid("d", "d, rank and layers must be positive"));
        }
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha", "superposition ratio must exceed 1"));
        }
        for (name, v) in [("c", self.c), ("eta_mag", self.eta_mag), ("tau", self.tau)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, "must be positive"));
            }
        }
        Ok(())
    }
}

/// Off-target perturbation from one edit of size `shift`.
pub fn edit_interference(cfg: &EditConfig, shift: f64) -> Result<f64> {
    cfg.validate()?;
    if !(shift > 0.0) {
        return Err(invalid("shift", "must be positive"));
    }
    Ok(cfg.c / (cfg.d as f64).sqrt() * shift * (1.0 - 1.0 / cfg.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditCapacity {
    pub k_star: f64,
    pub k_star_rank_r: f64,
    pub k_star_multilayer: f64,
}

/// Edits that fit before accumulated interference exceeds `tau`. The
/// rank-r figure is the leading term `r K*`.
pub fn edit_capacity(cfg: &EditConfig) -> Result<EditCapacity> {
    let per_edit = edit_interference(cfg, cfg.eta_mag)?;
    let k_star = cfg.tau / per_edit;
    Ok(EditCapacity {
        k_star,
        k_star_rank_r: cfg.rank as f64 * k_star,
        k_star_multilayer: cfg.layers as f64 * k_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvoprefConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub lambda: f64,
}

impl Default for EvoprefConstants {
    fn default() -> Self {
        EvoprefConstants {
            c1: 1.0,
            c2: 0.72,
            c3: 1.0,
            lambda: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvoprefGap {
    pub sample_term: f64,
    pub population_term: f64,
    pub convergence_term: f64,
    pub total: f64,
}

/// Coverage gap of a population of `mu` adapters evolved for `g`
/// generations on `n` preference pairs.
pub fn evopref_gap(
    gamma: Probability,
    n: u64,
    mu: u64,
    g: u32,
    delta: Probability,
    k: &EvoprefConstants,
) -> Result<EvoprefGap> {
    if n == 0 || mu == 0 {
        return Err(invalid("n", "n and mu must be positive"));
    }
    let dl = delta.value();
    if dl <= 0.0 || dl >= 1.0 {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    if !(k.lambda > 0.0) || k.c1 < 0.0 || k.c2 < 0.0 || k.c3 < 0.0 {
        return Err(invalid(
            "lambda",
            "constants must be non-negative, lambda positive",
        ));
    }
    let sample_term = k.c1 * (gamma.value() * (1.0 / dl).ln() / n as f64).sqrt();
    let population_term = k.c2 / (mu as f64).sqrt();
    let convergence_term = k.c3 * (-k.lambda * g as f64).exp();
    Ok(EvoprefGap {
        sample_term,
        population_term,
        convergence_term,
        total: sample_term + population_term + convergence_term,
    })
}
