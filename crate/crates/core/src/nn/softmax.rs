use crate::error::{Error, Result};

/// Max-shifted soft-max. Requires at least two finite entries.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.len() < 2 {
        return Err(Error::input(format!(
            "softmax needs at least 2 entries, got {}",
            z.len()
        )));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("softmax input {i}")));
    }
    Ok(softmax_unchecked(z))
}

pub(crate) fn softmax_unchecked(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// `log(sum(exp(z)))` with the maximum factored out.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}
