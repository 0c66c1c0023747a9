//! CIFAR-10 and CIFAR-100 binary versions.
//!
//! CIFAR-10 records are `<label><3072 pixels>`; CIFAR-100 records are
//! `<coarse label><fine label><3072 pixels>`. Pixels are 32x32 planes in
//! R, G, B order, so a record maps directly onto a `(3, 32, 32)` input.

use std::fs;
use std::path::{Path, PathBuf};

use super::{pixel, pixel_byte, Dataset, Split};
use crate::error::{Error, ParseErrorKind, Result};

const PIXELS: usize = 3 * 32 * 32;
const SHAPE: [usize; 3] = [3, 32, 32];

/// Super-class of each CIFAR-100 fine class, as published with the dataset.
pub const CIFAR100_COARSE_OF_FINE: [usize; 100] = [
    4, 1, 14, 8, 0, 6, 7, 7, 18, 3, 3, 14, 9, 18, 7, 11, 3, 9, 7, 11, 6, 11, 5, 10, 7, 6, 13, 15, 3, 15, 0, 11, 1, 10,
    12, 14, 16, 9, 11, 5, 5, 19, 8, 8, 15, 13, 14, 17, 18, 10, 16, 4, 17, 4, 2, 0, 17, 4, 18, 17, 10, 3, 2, 12, 12, 16,
    12, 1, 9, 19, 2, 10, 0, 1, 16, 12, 9, 13, 15, 13, 16, 19, 2, 4, 6, 19, 5, 5, 8, 19, 18, 1, 2, 15, 6, 0, 17, 8, 14,
    13,
];

struct Records {
    labels: Vec<usize>,
    coarse: Vec<usize>,
    pixels: Vec<f32>,
}

/// `label_bytes` leading label bytes per record; the last one is the fine
/// label, any before it the coarse label.
fn parse_records(name: &str, bytes: &[u8], label_bytes: usize, classes: &[usize], out: &mut Records) -> Result<()> {
    let record = label_bytes + PIXELS;
    if !bytes.len().is_multiple_of(record) {
        return Err(Error::Parse {
            kind: ParseErrorKind::BadRecordLength,
            file: name.to_owned(),
            offset: (bytes.len() - bytes.len() % record) as u64,
            detail: format!("{} bytes is not a multiple of the {record}-byte record", bytes.len()),
        });
    }
    for (r, chunk) in bytes.chunks_exact(record).enumerate() {
        for (j, (&b, &limit)) in chunk[..label_bytes].iter().zip(classes).enumerate() {
            if usize::from(b) >= limit {
                return Err(Error::Parse {
                    kind: ParseErrorKind::LabelOutOfRange,
                    file: name.to_owned(),
                    offset: (r * record + j) as u64,
                    detail: format!("label {b} not below {limit}"),
                });
            }
        }
        if label_bytes == 2 {
            out.coarse.push(usize::from(chunk[0]));
        }
        out.labels.push(usize::from(chunk[label_bytes - 1]));
        out.pixels.extend(chunk[label_bytes..].iter().map(|&b| pixel(b)));
    }
    Ok(())
}

/// Loads and concatenates CIFAR-10 batch files in the given order.
pub fn load_cifar10(files: &[PathBuf], split: Split) -> Result<Dataset> {
    let mut recs = Records {
        labels: Vec::new(),
        coarse: Vec::new(),
        pixels: Vec::new(),
    };
    for f in files {
        let bytes = fs::read(f)?;
        parse_records(&f.display().to_string(), &bytes, 1, &[10], &mut recs)?;
    }
    Dataset::new(SHAPE.to_vec(), recs.pixels, recs.labels, 10, split)
}

/// Loads one CIFAR-100 file; coarse labels are attached for super-class
/// metrics.
pub fn load_cifar100(file: &Path, split: Split) -> Result<Dataset> {
    let bytes = fs::read(file)?;
    parse_cifar100(&file.display().to_string(), &bytes, split)
}

pub(crate) fn parse_cifar100(name: &str, bytes: &[u8], split: Split) -> Result<Dataset> {
    let mut recs = Records {
        labels: Vec::new(),
        coarse: Vec::new(),
        pixels: Vec::new(),
    };
    parse_records(name, bytes, 2, &[20, 100], &mut recs)?;
    Dataset::new(SHAPE.to_vec(), recs.pixels, recs.labels, 100, split)?.with_coarse_labels(recs.coarse, 20)
}

fn encode(set: &Dataset, with_coarse: bool) -> Result<Vec<u8>> {
    if set.input_shape() != SHAPE {
        return Err(Error::input(format!(
            "CIFAR records hold (3, 32, 32) images, got {:?}",
            set.input_shape()
        )));
    }
    let coarse = if with_coarse {
        Some(
            set.coarse_labels()
                .ok_or_else(|| Error::input("CIFAR-100 records need coarse labels"))?,
        )
    } else {
        None
    };
    let mut out = Vec::with_capacity(set.len() * (PIXELS + 2));
    for i in 0..set.len() {
        if let Some(c) = coarse {
            out.push(c[i] as u8);
        }
        out.push(set.label(i) as u8);
        for &v in set.raw_input(i) {
            out.push(pixel_byte(v)?);
        }
    }
    Ok(out)
}

pub fn write_cifar10(set: &Dataset, path: &Path) -> Result<()> {
    if set.class_count() > 10 {
        return Err(Error::input("CIFAR-10 has 10 classes"));
    }
    fs::write(path, encode(set, false)?)?;
    Ok(())
}

pub fn write_cifar100(set: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode(set, true)?)?;
    Ok(())
}
