//! Measures of performance over per-object probability vectors.
//!
//! Tie rules: accuracy needs the correct class to hold the strict maximum;
//! close-enough uses `>=`; top-k ranks every class whose probability equals
//! the correct one ahead of it, so that top-1 coincides with accuracy.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::softmax::softmax_unchecked;
use crate::nn::Network;
use crate::scaling::{confidence_gap, normalized_confidences, param_scale};

/// Which evaluation points a [`MetricReport`] covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub ks: Vec<usize>,
    pub ats: Vec<f64>,
    pub mu: f64,
    pub bins: usize,
}

impl Default for EvalGrid {
    fn default() -> Self {
        Self {
            ks: (1..=10).collect(),
            ats: vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            mu: 0.01,
            bins: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloseEnough {
    pub at: f64,
    pub value: f64,
}

/// Mass of well, poorly and marginally classified objects at cutoff `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub mu: f64,
    pub well: f64,
    pub poor: f64,
    pub marginal: f64,
}

/// Uniform bins over `[lo, hi]`; each bin is right-exclusive except the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            counts: vec![0; bins],
        }
    }

    /// Bin index for `v`; values outside the range go to the edge bins.
    pub fn bin_of(&self, v: f64) -> usize {
        let n = self.counts.len();
        let t = (v - self.lo) / (self.hi - self.lo) * n as f64;
        if t <= 0.0 {
            0
        } else {
            (t.floor() as usize).min(n - 1)
        }
    }

    pub fn add(&mut self, v: f64) {
        let b = self.bin_of(v);
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityHistograms {
    /// `max_i p_i` over all objects, on `[0, 1]`.
    pub max_prob: Histogram,
    /// `p_correct` over all objects, on `[0, 1]`.
    pub correct_prob: Histogram,
    /// `p_correct − max_i p_i` over misclassified objects, on `[−1, 0]`.
    pub delta_p: Histogram,
}

/// Snapshot of every measure on one set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub objects: usize,
    pub accuracy: f64,
    pub top_k: Vec<TopK>,
    pub close_enough: Vec<CloseEnough>,
    pub superclass_accuracy: Option<f64>,
    pub partition: Partition,
    pub histograms: ProbabilityHistograms,
}

impl MetricReport {
    /// `confidences` are the normalized confidences `δX̂` of the same objects.
    pub fn compute(
        probs: &[Vec<f64>],
        labels: &[usize],
        confidences: &[f64],
        superclasses: Option<&[usize]>,
        grid: &EvalGrid,
    ) -> Result<Self> {
        check(probs, labels)?;
        if confidences.len() != labels.len() {
            return Err(Error::input("confidence count differs from object count"));
        }
        let classes = probs[0].len();
        let top_k = grid
            .ks
            .iter()
            .filter(|&&k| k <= classes)
            .map(|&k| {
                Ok(TopK {
                    k,
                    value: top_k_accuracy(probs, labels, k)?,
                })
            })
            .collect::<Result<_>>()?;
        let close_enough = grid
            .ats
            .iter()
            .map(|&at| {
                Ok(CloseEnough {
                    at,
                    value: close_enough_accuracy(probs, labels, at)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            objects: labels.len(),
            accuracy: accuracy(probs, labels)?,
            top_k,
            close_enough,
            superclass_accuracy: superclasses
                .map(|m| superclass_accuracy(probs, labels, m))
                .transpose()?,
            partition: partition_from_confidences(confidences, grid.mu)?,
            histograms: probability_histograms(probs, labels, grid.bins)?,
        })
    }

    pub fn top_k(&self, k: usize) -> Option<f64> {
        self.top_k.iter().find(|t| t.k == k).map(|t| t.value)
    }

    pub fn close_enough(&self, at: f64) -> Option<f64> {
        self.close_enough.iter().find(|c| c.at == at).map(|c| c.value)
    }
}

fn check(probs: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::input("no objects to evaluate"));
    }
    if probs.len() != labels.len() {
        return Err(Error::input(format!(
            "{} probability vectors for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let k = probs[0].len();
    if k < 2 {
        return Err(Error::input("need at least 2 classes"));
    }
    for (i, (p, &l)) in probs.iter().zip(labels).enumerate() {
        if p.len() != k {
            return Err(Error::input(format!(
                "object {i} has {} probabilities, expected {k}",
                p.len()
            )));
        }
        if l >= k {
            return Err(Error::input(format!("label {l} of object {i} out of range")));
        }
    }
    Ok(())
}

fn fraction(count: usize, total: usize) -> f64 {
    count as f64 / total as f64
}

fn max_of(p: &[f64]) -> f64 {
    p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn strictly_correct(p: &[f64], c: usize) -> bool {
    p.iter().enumerate().all(|(j, &v)| j == c || v < p[c])
}

pub fn accuracy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check(probs, labels)?;
    let n = probs
        .iter()
        .zip(labels)
        .filter(|(p, &c)| strictly_correct(p, c))
        .count();
    Ok(fraction(n, labels.len()))
}

pub fn top_k_accuracy(probs: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    check(probs, labels)?;
    let classes = probs[0].len();
    if k == 0 || k > classes {
        return Err(Error::input(format!("k must lie in 1..={classes}, got {k}")));
    }
    let n = probs
        .iter()
        .zip(labels)
        .filter(|(p, &c)| {
            let ahead = p.iter().enumerate().filter(|&(j, &v)| j != c && v >= p[c]).count();
            ahead < k
        })
        .count();
    Ok(fraction(n, labels.len()))
}

pub fn close_enough_accuracy(probs: &[Vec<f64>], labels: &[usize], at: f64) -> Result<f64> {
    check(probs, labels)?;
    if !(0.0..=1.0).contains(&at) {
        return Err(Error::input(format!("at must lie in [0, 1], got {at}")));
    }
    let n = probs
        .iter()
        .zip(labels)
        .filter(|(p, &c)| p[c] >= max_of(p) - at)
        .count();
    Ok(fraction(n, labels.len()))
}

/// Predicted class (lowest index among maxima) shares the correct class's
/// super-class.
pub fn superclass_accuracy(probs: &[Vec<f64>], labels: &[usize], fine_to_coarse: &[usize]) -> Result<f64> {
    check(probs, labels)?;
    let classes = probs[0].len();
    if fine_to_coarse.len() < classes {
        return Err(Error::config(format!(
            "super-class map covers {} of {classes} classes",
            fine_to_coarse.len()
        )));
    }
    let n = probs
        .iter()
        .zip(labels)
        .filter(|(p, &c)| {
            let m = max_of(p);
            let pred = p.iter().position(|&v| v == m).unwrap_or(0);
            fine_to_coarse[pred] == fine_to_coarse[c]
        })
        .count();
    Ok(fraction(n, labels.len()))
}

pub fn partition_from_confidences(confidences: &[f64], mu: f64) -> Result<Partition> {
    if confidences.is_empty() {
        return Err(Error::input("no objects to partition"));
    }
    if !(mu > 0.0) {
        return Err(Error::input(format!("mu must be > 0, got {mu}")));
    }
    let (mut well, mut poor) = (0, 0);
    for &d in confidences {
        if d > mu {
            well += 1;
        } else if d < -mu {
            poor += 1;
        }
    }
    let n = confidences.len();
    Ok(Partition {
        mu,
        well: fraction(well, n),
        poor: fraction(poor, n),
        marginal: fraction(n - well - poor, n),
    })
}

/// Partition of `set` by normalized confidence.
pub fn confidence_partition(net: &Network, set: &Dataset, mu: f64) -> Result<Partition> {
    if set.is_empty() {
        return Err(Error::input("empty dataset"));
    }
    partition_from_confidences(&normalized_confidences(net, set)?, mu)
}

pub fn probability_histograms(probs: &[Vec<f64>], labels: &[usize], bins: usize) -> Result<ProbabilityHistograms> {
    check(probs, labels)?;
    if bins < 2 {
        return Err(Error::input(format!("need at least 2 bins, got {bins}")));
    }
    let mut max_prob = Histogram::new(0.0, 1.0, bins);
    let mut correct_prob = Histogram::new(0.0, 1.0, bins);
    let mut delta_p = Histogram::new(-1.0, 0.0, bins);
    for (p, &c) in probs.iter().zip(labels) {
        let m = max_of(p);
        max_prob.add(m);
        correct_prob.add(p[c]);
        if !strictly_correct(p, c) {
            delta_p.add(p[c] - m);
        }
    }
    Ok(ProbabilityHistograms {
        max_prob,
        correct_prob,
        delta_p,
    })
}

/// Per-object probabilities `softmax(m · X)` and normalized confidences for
/// every object in `set`, where `m` is `multiplier`.
pub fn network_outputs(net: &Network, set: &Dataset, multiplier: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let r = param_scale(net)?.r;
    let mut probs = Vec::with_capacity(set.len());
    let mut conf = Vec::with_capacity(set.len());
    let mut buf = Vec::with_capacity(set.input_len());
    for i in 0..set.len() {
        set.input_into(i, &mut buf);
        let z = net.logits(&buf)?;
        conf.push(confidence_gap(&z, set.label(i))? / r);
        let scaled: Vec<f64> = z.iter().map(|v| v * multiplier).collect();
        if scaled.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("logits of object {i}")));
        }
        probs.push(softmax_unchecked(&scaled));
    }
    Ok((probs, conf))
}
