//! The loss family and its gradients.
//!
//! Every scale-aware loss is cross-entropy evaluated on the normalized logits
//! `X̂ = X / R(α)` multiplied by a trainable scale `ρ`:
//!
//! ```text
//! L(X̂, i, ρ) = log(1 + Σ_{j≠i} exp(ρ (X̂_j − X̂_i)))
//! ```
//!
//! The two-scale kinds pick `ρ` per object from the unnormalized confidence
//! `δX`: the low scale when `δX < η`, the high scale when `δX ≥ η`. Gradients
//! with respect to the parameters flow through both `X` and `R(α)`; the branch
//! choice is treated as locally constant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::softmax::softmax_unchecked;
use crate::nn::{log_sum_exp, Network};
use crate::scaling::{confidence_gap, param_scale, require_bias_free};

/// Floor applied to the correct-class probability in [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Plain cross-entropy on the raw logits; no scale parameters.
    VanillaCe,
    /// Scaled cross-entropy with one trainable scale `R1` for every object.
    SingleScale,
    /// Scales `R1` (low) and `R2` (high), both trained.
    TwoScale,
    /// Same value as `TwoScale`, scales frozen.
    FixedTwoScale,
    /// Low scale `R` frozen, high scale `R_s · R` with trainable `R_s`.
    Separation,
    /// Cross-entropy capped at `-log k`.
    Truncated,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::VanillaCe,
        LossKind::SingleScale,
        LossKind::TwoScale,
        LossKind::FixedTwoScale,
        LossKind::Separation,
        LossKind::Truncated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::VanillaCe => "vanilla-ce",
            LossKind::SingleScale => "single-scale",
            LossKind::TwoScale => "two-scale",
            LossKind::FixedTwoScale => "fixed-two-scale",
            LossKind::Separation => "separation",
            LossKind::Truncated => "truncated",
        }
    }

    /// Kinds whose value depends on the `δX ≥ η` branch.
    pub fn is_two_scale(self) -> bool {
        matches!(
            self,
            LossKind::TwoScale | LossKind::FixedTwoScale | LossKind::Separation
        )
    }

    /// Kinds that evaluate logits through the parameter scale.
    pub fn uses_scales(self) -> bool {
        !matches!(self, LossKind::VanillaCe | LossKind::Truncated)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = LossKind::ALL.iter().map(|k| k.name()).collect();
            Error::config(format!(
                "unknown loss variant {s:?}; expected one of {}",
                names.join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossVariant {
    pub kind: LossKind,
    /// Branch threshold for the two-scale kinds.
    pub eta: f64,
    /// Cap parameter of the truncated loss.
    #[serde(default)]
    pub trunc_k: f64,
    /// Compare `δX̂` instead of `δX` against `eta`.
    #[serde(default)]
    pub branch_on_normalized: bool,
}

impl LossVariant {
    pub fn new(kind: LossKind, eta: f64) -> Self {
        Self {
            kind,
            eta,
            trunc_k: 0.0,
            branch_on_normalized: false,
        }
    }

    pub fn truncated(k: f64) -> Self {
        Self {
            trunc_k: k,
            ..Self::new(LossKind::Truncated, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_two_scale() && !(self.eta > 0.0) {
            return Err(Error::config(format!(
                "{} requires eta > 0, got {}",
                self.kind, self.eta
            )));
        }
        if self.kind == LossKind::Truncated && !(0.0..=1.0).contains(&self.trunc_k) {
            return Err(Error::config(format!(
                "trunc_k must lie in [0, 1], got {}",
                self.trunc_k
            )));
        }
        Ok(())
    }
}

/// The trainable (or frozen) scales of a run. For [`LossKind::Separation`],
/// `low` is the frozen `R` and `high` is the separation factor `R_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleState {
    pub low: f64,
    pub high: f64,
}

impl ScaleState {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        let s = Self { low, high };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.high > 0.0) || !self.low.is_finite() || !self.high.is_finite() {
            return Err(Error::InvalidState(format!(
                "scales must be finite and positive, got ({}, {})",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Low,
    High,
}

/// `-log p[correct]`, with the probability floored at [`PROB_FLOOR`].
pub fn cross_entropy(p: &[f64], correct: usize) -> Result<f64> {
    check_class(p.len(), correct)?;
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::input("probabilities must be finite and non-negative"));
    }
    Ok(-p[correct].max(PROB_FLOOR).ln())
}

/// `log(1 + Σ_{j≠i} exp(ρ (X̂_j − X̂_i)))`, evaluated as a max-shifted
/// log-sum-exp so that it never forms probabilities.
pub fn scaled_ce(x_hat: &[f64], correct: usize, rho: f64) -> Result<f64> {
    check_class(x_hat.len(), correct)?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::input(format!("scale must be finite and positive, got {rho}")));
    }
    if x_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite normalized logit"));
    }
    Ok(scaled_ce_value(x_hat, correct, rho))
}

fn scaled_ce_value(x_hat: &[f64], correct: usize, rho: f64) -> f64 {
    let c = x_hat[correct];
    // exponents are ρ (X̂_j − X̂_i); the j = i term contributes exp(0) = 1
    let exps: Vec<f64> = x_hat.iter().map(|&v| rho * (v - c)).collect();
    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        let rest: f64 = exps
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != correct)
            .map(|(_, e)| e.exp())
            .sum();
        rest.ln_1p()
    } else {
        log_sum_exp(&exps)
    }
}

/// Loss capped at `-log k` for objects whose correct-class probability is
/// below `k`.
pub fn truncated_loss(p: &[f64], correct: usize, k: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::input(format!("k must lie in [0, 1], got {k}")));
    }
    check_class(p.len(), correct)?;
    if p[correct] < k {
        Ok(-k.ln())
    } else {
        cross_entropy(p, correct)
    }
}

/// Closed form of `∂L/∂R2` for a well-classified object:
/// `Σ_{j≠i} d_j e^{R2 d_j} / (1 + Σ_{j≠i} e^{R2 d_j})` with `d_j = X̂_j − X̂_i`.
pub fn dloss_dr2_analytic(x_hat: &[f64], correct: usize, r2: f64) -> Result<f64> {
    let gap = confidence_gap(x_hat, correct)?;
    if !(gap > 0.0) {
        return Err(Error::ContractViolation(format!(
            "object is not well classified (normalized confidence {gap})"
        )));
    }
    let c = x_hat[correct];
    let (mut num, mut den) = (0.0, 1.0);
    for (j, &v) in x_hat.iter().enumerate() {
        if j == correct {
            continue;
        }
        let d = v - c;
        let e = (r2 * d).exp();
        num += d * e;
        den += e;
    }
    Ok(num / den)
}

fn check_class(k: usize, correct: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::input("need at least 2 classes"));
    }
    if correct >= k {
        return Err(Error::input(format!("class {correct} out of range for {k} classes")));
    }
    Ok(())
}

/// Loss of one object and its derivatives with respect to the logits, the
/// parameter scale `R`, and the two scale parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLoss {
    pub loss: f64,
    pub branch: Branch,
    /// Unnormalized confidence `δX`.
    pub delta_x: f64,
    /// `∂L/∂X` holding `R` fixed.
    pub d_logits: Vec<f64>,
    /// `∂L/∂R` through the normalization `X̂ = X / R`.
    pub d_param_scale: f64,
    pub d_low: f64,
    pub d_high: f64,
}

/// Picks the branch for an object from its logits.
pub fn branch_of(variant: &LossVariant, delta_x: f64, param_scale: f64) -> Branch {
    if !variant.kind.is_two_scale() {
        return Branch::Low;
    }
    let confidence = if variant.branch_on_normalized {
        delta_x / param_scale
    } else {
        delta_x
    };
    if confidence >= variant.eta {
        Branch::High
    } else {
        Branch::Low
    }
}

/// Loss and derivatives of one object given its logits and the current
/// parameter scale `r`.
pub fn sample_loss(
    variant: &LossVariant,
    state: &ScaleState,
    logits: &[f64],
    r: f64,
    correct: usize,
) -> Result<SampleLoss> {
    check_class(logits.len(), correct)?;
    let delta_x = confidence_gap(logits, correct)?;
    let branch = branch_of(variant, delta_x, r);
    let k = logits.len();

    match variant.kind {
        LossKind::VanillaCe | LossKind::Truncated => {
            let p = softmax_unchecked(logits);
            if variant.kind == LossKind::Truncated && p[correct] < variant.trunc_k {
                return Ok(SampleLoss {
                    loss: -variant.trunc_k.ln(),
                    branch,
                    delta_x,
                    d_logits: vec![0.0; k],
                    d_param_scale: 0.0,
                    d_low: 0.0,
                    d_high: 0.0,
                });
            }
            let loss = log_sum_exp(logits) - logits[correct];
            let mut d = p;
            d[correct] -= 1.0;
            Ok(SampleLoss {
                loss,
                branch,
                delta_x,
                d_logits: d,
                d_param_scale: 0.0,
                d_low: 0.0,
                d_high: 0.0,
            })
        }
        _ => {
            let x_hat: Vec<f64> = logits.iter().map(|v| v / r).collect();
            // effective multiplier on X̂, and d(rho)/d(scale parameter)
            let (rho, drho) = match (variant.kind, branch) {
                (LossKind::Separation, Branch::Low) => (state.low, 0.0),
                (LossKind::Separation, Branch::High) => (state.high * state.low, state.low),
                (_, Branch::Low) => (state.low, 1.0),
                (_, Branch::High) => (state.high, 1.0),
            };
            let loss = scaled_ce_value(&x_hat, correct, rho);
            let z: Vec<f64> = x_hat.iter().map(|v| rho * v).collect();
            let mut q = softmax_unchecked(&z);
            // q − e_i with the correct entry rebuilt from the others, so a
            // confident object keeps a strictly signed derivative even once
            // q_i rounds to 1
            q[correct] = 0.0;
            q[correct] = -q.iter().sum::<f64>();
            // dL/dρ = Σ_j (q_j − e_ij) X̂_j = Σ_{j≠i} q_j (X̂_j − X̂_i)
            let dl_drho: f64 = q
                .iter()
                .zip(&x_hat)
                .enumerate()
                .filter(|&(j, _)| j != correct)
                .map(|(_, (a, b))| a * (b - x_hat[correct]))
                .sum();
            let d_logits: Vec<f64> = q.iter().map(|v| rho * v / r).collect();
            let d_param_scale = -rho * dl_drho / r;
            let d_scale = dl_drho * drho;
            let (d_low, d_high) = match (variant.kind, branch) {
                (LossKind::Separation, Branch::Low) => (0.0, 0.0),
                (_, Branch::Low) => (d_scale, 0.0),
                (_, Branch::High) => (0.0, d_scale),
            };
            Ok(SampleLoss {
                loss,
                branch,
                delta_x,
                d_logits,
                d_param_scale,
                d_low,
                d_high,
            })
        }
    }
}

/// Value of a scale-aware loss for one object, with its branch.
pub fn two_scale_loss(
    net: &Network,
    state: &ScaleState,
    variant: &LossVariant,
    input: &[f64],
    correct: usize,
) -> Result<(f64, Branch)> {
    if !variant.kind.uses_scales() {
        return Err(Error::config(format!("{} is not a scale-aware loss", variant.kind)));
    }
    variant.validate()?;
    require_bias_free(net)?;
    let r = param_scale(net)?.r;
    let s = sample_loss(variant, state, &net.logits(input)?, r, correct)?;
    Ok((s.loss, s.branch))
}

/// Batch-mean loss and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    pub loss: f64,
    pub grad_params: Vec<Vec<f64>>,
    /// Mean `∂L/∂R1` (or `∂L/∂R` for the separation kind, always zero).
    pub grad_low: f64,
    /// Mean `∂L/∂R2` (or `∂L/∂R_s`).
    pub grad_high: f64,
    /// Objects on the high branch.
    pub high_count: usize,
    /// Objects with `δX > 0`.
    pub correct_count: usize,
    pub batch_size: usize,
}

/// Mean loss and gradients over `indices` of `set`. Per-object contributions
/// are accumulated in index order.
pub fn loss_gradients(
    net: &Network,
    state: &ScaleState,
    variant: &LossVariant,
    set: &Dataset,
    indices: &[usize],
) -> Result<BatchGradients> {
    if indices.is_empty() {
        return Err(Error::input("empty batch"));
    }
    variant.validate()?;
    let reading = if variant.kind.uses_scales() {
        require_bias_free(net)?;
        Some(param_scale(net)?)
    } else {
        None
    };
    let r = reading.as_ref().map_or(1.0, |s| s.r);

    let mut grads = net.zero_grads();
    let (mut loss, mut d_r, mut d_low, mut d_high) = (0.0, 0.0, 0.0, 0.0);
    let (mut high_count, mut correct_count) = (0, 0);
    let mut buf = Vec::with_capacity(set.input_len());
    for &i in indices {
        set.input_into(i, &mut buf);
        let fwd = net.forward_values(&buf)?;
        let s = sample_loss(variant, state, &fwd.logits, r, set.label(i))?;
        if s.d_logits.iter().any(|&v| v != 0.0) {
            net.backward_into(&fwd.cache, &s.d_logits, &mut grads)?;
        }
        loss += s.loss;
        d_r += s.d_param_scale;
        d_low += s.d_low;
        d_high += s.d_high;
        high_count += usize::from(s.branch == Branch::High);
        correct_count += usize::from(s.delta_x > 0.0);
    }

    let n = indices.len() as f64;
    for g in grads.iter_mut().flatten() {
        *g /= n;
    }
    if let Some(reading) = reading {
        // ∂R/∂α_l = R · α_l / ‖α_l‖²
        let coef = d_r / n * reading.r;
        for ((g, p), norm) in grads.iter_mut().zip(net.params()).zip(&reading.per_layer_norms) {
            let c = coef / (norm * norm);
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi += c * pi;
            }
        }
    }
    Ok(BatchGradients {
        loss: loss / n,
        grad_params: grads,
        grad_low: d_low / n,
        grad_high: d_high / n,
        high_count,
        correct_count,
        batch_size: indices.len(),
    })
}
