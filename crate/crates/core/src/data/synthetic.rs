//! Gaussian blobs for fast, deterministic experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub classes: usize,
    /// Objects per class in each split.
    pub per_class: usize,
    pub dim: usize,
    /// Standard deviation of every coordinate around its center.
    pub spread: f64,
    pub seed: u64,
}

/// Class centers at unit distance from the origin: the standard basis when
/// `dim >= classes`, otherwise evenly spaced on the unit circle of the first
/// two coordinates. Every pair of centers is separable by a bias-free linear
/// map.
fn centers(classes: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim >= classes {
        return Ok((0..classes)
            .map(|k| (0..dim).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
            .collect());
    }
    if dim == 1 {
        if classes == 2 {
            return Ok(vec![vec![1.0], vec![-1.0]]);
        }
        return Err(Error::config("one-dimensional blobs support only 2 classes"));
    }
    Ok((0..classes)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / classes as f64;
            let mut c = vec![0.0; dim];
            c[0] = theta.cos();
            c[1] = theta.sin();
            c
        })
        .collect())
}

/// Train and test splits drawn from one seeded stream, classes interleaved.
pub fn synthetic_blobs(cfg: &BlobConfig) -> Result<(Dataset, Dataset)> {
    if cfg.classes < 2 || cfg.per_class == 0 || cfg.dim == 0 {
        return Err(Error::config(
            "blobs need >= 2 classes, >= 1 object per class, dim >= 1",
        ));
    }
    if !(cfg.spread >= 0.0) || !cfg.spread.is_finite() {
        return Err(Error::config(format!(
            "spread must be finite and >= 0, got {}",
            cfg.spread
        )));
    }
    let centers = centers(cfg.classes, cfg.dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |split| {
        let n = cfg.classes * cfg.per_class;
        let mut inputs = Vec::with_capacity(n * cfg.dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % cfg.classes;
            for &c in &centers[k] {
                let noise: f64 = StandardNormal.sample(&mut rng);
                inputs.push((c + cfg.spread * noise) as f32);
            }
            labels.push(k);
        }
        Dataset::new(vec![cfg.dim], inputs, labels, cfg.classes, split)
    };
    let train = draw(Split::Train)?;
    let test = draw(Split::Test)?;
    Ok((train, test))
}
