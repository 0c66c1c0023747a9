//! MNIST in the IDX format: big-endian `u32` header fields followed by raw
//! unsigned bytes.

use std::fs;
use std::path::Path;

use super::{pixel, pixel_byte, Dataset, Split};
use crate::error::{Error, ParseErrorKind, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const CLASSES: usize = 10;

struct Reader<'a> {
    name: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(name: &'a str, bytes: &'a [u8]) -> Self {
        Self { name, bytes, pos: 0 }
    }

    fn err(&self, kind: ParseErrorKind, offset: usize, detail: impl Into<String>) -> Error {
        Error::Parse {
            kind,
            file: self.name.to_owned(),
            offset: offset as u64,
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                self.err(
                    ParseErrorKind::Truncated,
                    self.bytes.len(),
                    format!("needed {n} bytes at offset {}", self.pos),
                )
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let got = self.u32()?;
        if got != expected {
            return Err(self.err(
                ParseErrorKind::BadMagic,
                0,
                format!("expected {expected:#010x}, found {got:#010x}"),
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(
                ParseErrorKind::TrailingBytes,
                self.pos,
                format!("{} bytes after the last record", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Loads an image/label file pair. Pixels are scaled to `[0, 1]`; with
/// `flatten` the inputs are `rows * cols` vectors, otherwise `(1, rows, cols)`.
pub fn load_mnist(images: &Path, labels: &Path, split: Split, flatten: bool) -> Result<Dataset> {
    let image_bytes = fs::read(images)?;
    let label_bytes = fs::read(labels)?;
    parse_mnist(
        &display(images),
        &image_bytes,
        &display(labels),
        &label_bytes,
        split,
        flatten,
    )
}

pub(crate) fn parse_mnist(
    image_name: &str,
    image_bytes: &[u8],
    label_name: &str,
    label_bytes: &[u8],
    split: Split,
    flatten: bool,
) -> Result<Dataset> {
    let mut imgs = Reader::new(image_name, image_bytes);
    imgs.magic(IMAGE_MAGIC)?;
    let count = imgs.u32()? as usize;
    let rows = imgs.u32()? as usize;
    let cols = imgs.u32()? as usize;
    let pixels = imgs.take(count * rows * cols)?;
    imgs.finish()?;

    let mut labs = Reader::new(label_name, label_bytes);
    labs.magic(LABEL_MAGIC)?;
    let label_count = labs.u32()? as usize;
    if label_count != count {
        return Err(labs.err(
            ParseErrorKind::CountMismatch,
            4,
            format!("{label_count} labels for {count} images in {image_name}"),
        ));
    }
    let raw_labels = labs.take(count)?;
    labs.finish()?;
    if let Some(i) = raw_labels.iter().position(|&l| usize::from(l) >= CLASSES) {
        return Err(labs.err(
            ParseErrorKind::LabelOutOfRange,
            8 + i,
            format!("label {} is not a digit", raw_labels[i]),
        ));
    }

    let shape = if flatten {
        vec![rows * cols]
    } else {
        vec![1, rows, cols]
    };
    Dataset::new(
        shape,
        pixels.iter().map(|&b| pixel(b)).collect(),
        raw_labels.iter().map(|&l| usize::from(l)).collect(),
        CLASSES,
        split,
    )
}

/// Writes `set` as an IDX image/label pair. Inputs must be exact `k / 255`
/// intensities with a square (or `(1, rows, cols)`) layout.
pub fn write_mnist(set: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let (image_bytes, label_bytes) = encode_mnist(set)?;
    fs::write(images, image_bytes)?;
    fs::write(labels, label_bytes)?;
    Ok(())
}

pub(crate) fn encode_mnist(set: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = match *set.input_shape() {
        [1, r, c] => (r, c),
        [n] => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(Error::input(format!("cannot lay out {n} pixels as a square image")));
            }
            (side, side)
        }
        ref other => return Err(Error::input(format!("unsupported image shape {other:?}"))),
    };
    if set.class_count() > CLASSES {
        return Err(Error::input("IDX labels are single digits"));
    }
    let mut img = Vec::with_capacity(16 + set.len() * rows * cols);
    for v in [IMAGE_MAGIC, set.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for i in 0..set.len() {
        for &v in set.raw_input(i) {
            img.push(pixel_byte(v)?);
        }
    }
    let mut lab = Vec::with_capacity(8 + set.len());
    for v in [LABEL_MAGIC, set.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(set.labels().iter().map(|&l| l as u8));
    Ok((img, lab))
}
