//! Locating the published dataset files under a root directory.
//!
//! Each loader accepts the files either directly in the root or in the
//! directory the official archive unpacks to (`mnist/`, `cifar-10-batches-bin/`,
//! `cifar-100-binary/`).

use std::path::{Path, PathBuf};

use super::{load_cifar10, load_cifar100, load_mnist, Dataset, Split, DATA_DIR_ENV};
use crate::error::{Error, Result};

/// `explicit` if given, else the directory named by the environment.
pub fn resolve_data_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
}

fn find(root: &Path, subdirs: &[&str], names: &[&str]) -> Option<PathBuf> {
    std::iter::once(root.to_path_buf())
        .chain(subdirs.iter().map(|s| root.join(s)))
        .flat_map(|d| names.iter().map(move |n| d.join(n)))
        .find(|p| p.is_file())
}

fn missing(what: &str, root: &Path, names: &[&str]) -> Error {
    Error::config(format!(
        "{what} not found under {} (looked for {})",
        root.display(),
        names.join(", ")
    ))
}

/// MNIST split from the IDX files; flattened to 784-vectors when `flatten`.
pub fn load_mnist_dir(root: &Path, split: Split, flatten: bool) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let subdirs = ["mnist", "MNIST/raw"];
    let images = [
        format!("{prefix}-images-idx3-ubyte"),
        format!("{prefix}-images.idx3-ubyte"),
    ];
    let labels = [
        format!("{prefix}-labels-idx1-ubyte"),
        format!("{prefix}-labels.idx1-ubyte"),
    ];
    let images: Vec<&str> = images.iter().map(String::as_str).collect();
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    let img = find(root, &subdirs, &images).ok_or_else(|| missing("MNIST images", root, &images))?;
    let lab = find(root, &subdirs, &labels).ok_or_else(|| missing("MNIST labels", root, &labels))?;
    load_mnist(&img, &lab, split, flatten)
}

pub fn load_cifar10_dir(root: &Path, split: Split) -> Result<Dataset> {
    let subdirs = ["cifar-10-batches-bin"];
    let names: Vec<String> = match split {
        Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".into()],
    };
    let files = names
        .iter()
        .map(|n| find(root, &subdirs, &[n]).ok_or_else(|| missing("CIFAR-10 batch", root, &[n])))
        .collect::<Result<Vec<_>>>()?;
    load_cifar10(&files, split)
}

pub fn load_cifar100_dir(root: &Path, split: Split) -> Result<Dataset> {
    let name = match split {
        Split::Train => "train.bin",
        Split::Test => "test.bin",
    };
    let file = find(root, &["cifar-100-binary"], &[name]).ok_or_else(|| missing("CIFAR-100 file", root, &[name]))?;
    load_cifar100(&file, split)
}
