//! Parameter-magnitude algebra.
//!
//! For a bias-free network built from degree-1 homogeneous layers, the
//! pre-soft-max vector satisfies `X(c·α) = c^D · X(α)` for `c > 0`, where `D`
//! is the number of parameterized layers. The product of per-layer norms `R`
//! therefore separates the size of the parameters from their direction, and
//! `X / R` (the normalized logits) depends on the direction only.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Network;

/// Product of per-layer Euclidean norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReading {
    pub r: f64,
    pub per_layer_norms: Vec<f64>,
}

/// Unnormalized and normalized classification confidence of one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceRecord {
    pub delta_x: f64,
    pub delta_x_hat: f64,
    /// Zero-based class index.
    pub correct_class: usize,
}

pub fn param_scale(net: &Network) -> Result<ScaleReading> {
    let per_layer_norms: Vec<f64> = net
        .params()
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(layer) = per_layer_norms.iter().position(|&n| n == 0.0) {
        return Err(Error::DegenerateScale { layer });
    }
    let r = per_layer_norms.iter().product();
    Ok(ScaleReading { r, per_layer_norms })
}

pub(crate) fn require_bias_free(net: &Network) -> Result<()> {
    if net.has_bias() {
        return Err(Error::config("scale normalization requires a bias-free network"));
    }
    Ok(())
}

/// `X / R`: the pre-soft-max vector of the unit-scale network with the same
/// parameter direction.
pub fn normalized_logits(net: &Network, input: &[f64]) -> Result<Vec<f64>> {
    require_bias_free(net)?;
    let r = param_scale(net)?.r;
    let mut z = net.logits(input)?;
    z.iter_mut().for_each(|v| *v /= r);
    Ok(z)
}

/// Copy of `net` with parameters `α / R^(1/D)`, so that its scale is 1.
pub fn renormalized(net: &Network) -> Result<Network> {
    require_bias_free(net)?;
    let r = param_scale(net)?.r;
    Ok(net.scaled(r.powf(-1.0 / net.degree() as f64)))
}

/// Correct-class logit minus the largest other logit.
pub fn confidence_gap(logits: &[f64], correct: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::input("confidence needs at least 2 classes"));
    }
    if correct >= logits.len() {
        return Err(Error::input(format!(
            "class {correct} out of range for {} classes",
            logits.len()
        )));
    }
    let rival = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != correct)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[correct] - rival)
}

pub fn confidence(net: &Network, input: &[f64], correct: usize) -> Result<ConfidenceRecord> {
    let r = param_scale(net)?.r;
    let delta_x = confidence_gap(&net.logits(input)?, correct)?;
    Ok(ConfidenceRecord {
        delta_x,
        delta_x_hat: delta_x / r,
        correct_class: correct,
    })
}

/// Normalized confidence of every object in `set`.
pub fn normalized_confidences(net: &Network, set: &Dataset) -> Result<Vec<f64>> {
    let r = param_scale(net)?.r;
    let mut buf = Vec::new();
    (0..set.len())
        .map(|i| {
            set.input_into(i, &mut buf);
            Ok(confidence_gap(&net.logits(&buf)?, set.label(i))? / r)
        })
        .collect()
}

/// Number of objects whose confidence strictly exceeds `eta`.
pub fn well_classified_count(net: &Network, set: &Dataset, eta: f64) -> Result<usize> {
    if !(eta >= 0.0) {
        return Err(Error::input(format!("eta must be >= 0, got {eta}")));
    }
    if set.is_empty() {
        return Err(Error::input("empty dataset"));
    }
    let mut buf = Vec::new();
    let mut count = 0;
    for i in 0..set.len() {
        set.input_into(i, &mut buf);
        if confidence_gap(&net.logits(&buf)?, set.label(i))? > eta {
            count += 1;
        }
    }
    Ok(count)
}
