//! Labeled datasets and the loaders for the raw MNIST and CIFAR binaries.

mod cifar;
mod files;
mod mnist;
mod synthetic;

pub use cifar::{load_cifar10, load_cifar100, write_cifar10, write_cifar100, CIFAR100_COARSE_OF_FINE};
pub use files::{load_cifar100_dir, load_cifar10_dir, load_mnist_dir, resolve_data_dir};
pub use mnist::{load_mnist, write_mnist};
pub use synthetic::{synthetic_blobs, BlobConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "TWOSCALE_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Objects with zero-based fine labels and optional coarse labels.
///
/// Inputs are stored flat in `f32` (raw pixels are 8-bit, so nothing is lost
/// there) and widened to `f64` on access.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_shape: Vec<usize>,
    inputs: Vec<f32>,
    labels: Vec<usize>,
    classes: usize,
    coarse: Option<Coarse>,
    split: Split,
}

#[derive(Debug, Clone, PartialEq)]
struct Coarse {
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(
        input_shape: Vec<usize>,
        inputs: Vec<f32>,
        labels: Vec<usize>,
        classes: usize,
        split: Split,
    ) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::input(format!("invalid input shape {input_shape:?}")));
        }
        if classes < 2 {
            return Err(Error::input("a dataset needs at least 2 classes"));
        }
        let width: usize = input_shape.iter().product();
        if inputs.len() != width * labels.len() {
            return Err(Error::input(format!(
                "{} input values for {} objects of size {width}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l >= classes) {
            return Err(Error::input(format!("label {} of object {i} out of range", labels[i])));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite input value"));
        }
        Ok(Self {
            input_shape,
            inputs,
            labels,
            classes,
            coarse: None,
            split,
        })
    }

    /// Attaches super-class labels, one per object.
    pub fn with_coarse_labels(mut self, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != self.labels.len() {
            return Err(Error::input("coarse label count differs from object count"));
        }
        if let Some(i) = labels.iter().position(|&l| l >= classes) {
            return Err(Error::input(format!(
                "coarse label {} of object {i} out of range",
                labels[i]
            )));
        }
        self.coarse = Some(Coarse { labels, classes });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn coarse_labels(&self) -> Option<&[usize]> {
        self.coarse.as_ref().map(|c| c.labels.as_slice())
    }

    pub fn coarse_class_count(&self) -> Option<usize> {
        self.coarse.as_ref().map(|c| c.classes)
    }

    pub fn raw_input(&self, i: usize) -> &[f32] {
        let w = self.input_len();
        &self.inputs[i * w..(i + 1) * w]
    }

    pub fn input(&self, i: usize) -> Vec<f64> {
        self.raw_input(i).iter().map(|&v| f64::from(v)).collect()
    }

    /// Writes object `i` into `buf`, reusing its allocation.
    pub fn input_into(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.raw_input(i).iter().map(|&v| f64::from(v)));
    }

    /// Fine-to-coarse map observed in the data. Fine classes that never occur
    /// map to `None`; inconsistent pairs are an error.
    pub fn fine_to_coarse(&self) -> Result<Vec<Option<usize>>> {
        let coarse = self
            .coarse
            .as_ref()
            .ok_or_else(|| Error::config("dataset has no coarse labels"))?;
        let mut map = vec![None; self.classes];
        for (i, (&f, &c)) in self.labels.iter().zip(&coarse.labels).enumerate() {
            match map[f] {
                None => map[f] = Some(c),
                Some(prev) if prev != c => {
                    return Err(Error::input(format!(
                        "object {i}: fine class {f} maps to coarse {c}, earlier objects gave {prev}"
                    )))
                }
                _ => {}
            }
        }
        Ok(map)
    }

    /// New dataset holding the given objects, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let w = self.input_len();
        let mut inputs = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            inputs.extend_from_slice(self.raw_input(i));
        }
        Self {
            input_shape: self.input_shape.clone(),
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            coarse: self.coarse.as_ref().map(|c| Coarse {
                labels: indices.iter().map(|&i| c.labels[i]).collect(),
                classes: c.classes,
            }),
            split: self.split,
        }
    }

    /// The first `n` objects (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Applies per-channel standardization. Channels are the leading axis of
    /// rank-3 inputs; other shapes are a single channel.
    pub fn standardize(&mut self, stats: &ChannelStats) -> Result<()> {
        let channels = self.channel_count();
        if stats.mean.len() != channels {
            return Err(Error::input("channel statistics do not match the dataset"));
        }
        let width = self.input_len();
        let plane = width / channels;
        for (j, v) in self.inputs.iter_mut().enumerate() {
            let c = (j % width) / plane;
            *v = ((f64::from(*v) - stats.mean[c]) / stats.std[c]) as f32;
        }
        Ok(())
    }

    fn channel_count(&self) -> usize {
        if self.input_shape.len() == 3 {
            self.input_shape[0]
        } else {
            1
        }
    }
}

/// Per-channel mean and standard deviation, normally taken from a training
/// split and applied to both splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn from_dataset(set: &Dataset) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::input("empty dataset"));
        }
        let channels = set.channel_count();
        let plane = set.input_len() / channels;
        let mut sum = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        for i in 0..set.len() {
            for (j, &v) in set.raw_input(i).iter().enumerate() {
                let v = f64::from(v);
                sum[j / plane] += v;
                sq[j / plane] += v * v;
            }
        }
        let n = (set.len() * plane) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }
}

/// Maps a stored byte to `[0, 1]`.
pub(crate) fn pixel(b: u8) -> f32 {
    f32::from(b) / 255.0
}

/// Inverse of [`pixel`]; fails for values that are not exactly `k / 255`.
pub(crate) fn pixel_byte(v: f32) -> Result<u8> {
    let scaled = (v * 255.0).round();
    if !(0.0..=255.0).contains(&scaled) || pixel(scaled as u8) != v {
        return Err(Error::input(format!("value {v} is not an 8-bit pixel intensity")));
    }
    Ok(scaled as u8)
}
