//! Image datasets, the three-way split and batching.
//!
//! All images are stored as `[N, 1, H, W]` tensors with values in `[0, 1]`.

mod idx;
mod monitor;
mod split;
mod usps;

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::seed::rng_from_seed;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use monitor::AccessMonitor;
pub use split::{batches, split_three_way, Split};
pub use usps::{load_usps, parse_usps};

/// Read-only access to labelled images, so training code can be instrumented.
pub trait Samples: Sync {
    /// `(channels, height, width)` of every image.
    fn dims(&self) -> [usize; 3];
    fn len(&self) -> usize;
    fn image(&self, i: usize) -> &[f32];
    fn label(&self, i: usize) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sample_len(&self) -> usize {
        self.dims().iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    images: Tensor<f32>,
    labels: Vec<u8>,
}

pub const N_CLASSES: usize = 10;

impl Dataset {
    /// Checks that counts agree, pixels lie in `[0, 1]` and labels in `[0, 10)`.
    pub fn new(name: impl Into<String>, images: Tensor<f32>, labels: Vec<u8>) -> Result<Self> {
        let name = name.into();
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != 1 {
            return Err(Error::Shape(format!("{name}: images must be [N, 1, H, W], got {shape:?}")));
        }
        if shape[0] != labels.len() {
            return Err(Error::Shape(format!(
                "{name}: {} images but {} labels",
                shape[0],
                labels.len()
            )));
        }
        if let Some(v) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Format(format!("{name}: pixel value {v} outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= N_CLASSES) {
            return Err(Error::Format(format!("{name}: label {l} outside [0, {N_CLASSES})")));
        }
        Ok(Self { name, images, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Count of samples per class.
    pub fn label_histogram(&self) -> [usize; N_CLASSES] {
        let mut h = [0; N_CLASSES];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "cannot pool {:?} images with {:?} images",
                self.dims(),
                other.dims()
            )));
        }
        let mut data = self.images.data().to_vec();
        data.extend_from_slice(other.images.data());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let [c, h, w] = self.dims();
        Dataset::new(self.name.clone(), Tensor::new(vec![labels.len(), c, h, w], data)?, labels)
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        let [c, h, w] = self.dims();
        Dataset::new(self.name.clone(), Tensor::new(vec![indices.len(), c, h, w], data)?, labels)
    }

    /// A seeded uniform sample of `n` samples (original order preserved), or
    /// a copy of everything when `n >= len`.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        let mut picked = index::sample(&mut rng_from_seed(seed), self.len(), n).into_vec();
        picked.sort_unstable();
        self.subset(&picked)
    }
}

impl Samples for Dataset {
    fn dims(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn image(&self, i: usize) -> &[f32] {
        self.images.row(i)
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }
}

/// The four supported benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetName {
    Mnist,
    Kmnist,
    FashionMnist,
    Usps,
}

impl DatasetName {
    pub const ALL: [DatasetName; 4] = [
        DatasetName::Mnist,
        DatasetName::Kmnist,
        DatasetName::FashionMnist,
        DatasetName::Usps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Kmnist => "kmnist",
            DatasetName::FashionMnist => "fashion-mnist",
            DatasetName::Usps => "usps",
        }
    }

    /// Official (train, test) sizes.
    pub fn official_sizes(self) -> (usize, usize) {
        match self {
            DatasetName::Usps => (7291, 2007),
            _ => (60_000, 10_000),
        }
    }

    /// Where to fetch the files and how to lay them out under `--data-dir`.
    pub fn download_instructions(self) -> String {
        let dir = self.name();
        match self {
            DatasetName::Usps => format!(
                "usps: place the training and test files in <data-dir>/{dir}/.\n\
                 Accepted names: usps / usps.t (LIBSVM 'label idx:value' format, labels 1-10),\n\
                 or zip.train / zip.test (dense 'label v1 .. v256' format, labels 0-9).\n\
                 Values must lie in [-1, 1]; .gz and .bz2 files are decompressed transparently.\n\
                 Sources: the LIBSVM multi-class dataset page, or the 'zip code' data of\n\
                 The Elements of Statistical Learning website.\n"
            ),
            _ => {
                let source = match self {
                    DatasetName::Mnist => "the MNIST database page (or any mirror of the four IDX files)",
                    DatasetName::Kmnist => "the Kuzushiji-MNIST repository (the IDX 'kmnist' files)",
                    _ => "the Fashion-MNIST repository (data/fashion/*)",
                };
                format!(
                    "{dir}: place the four IDX files in <data-dir>/{dir}/:\n\
                     \x20 train-images-idx3-ubyte  train-labels-idx1-ubyte\n\
                     \x20 t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte\n\
                     Gzipped copies (*.gz) are read transparently. Source: {source}.\n"
                )
            }
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("fashion") && *d == Self::FashionMnist))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown dataset '{s}' (expected mnist, kmnist, fashion-mnist or usps)"
                ))
            })
    }
}

/// The official training and test portions of a benchmark.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Dataset,
    pub test: Dataset,
}

impl Corpus {
    /// Training followed by test samples, as one pool.
    pub fn pooled(&self) -> Result<Dataset> {
        self.train.concat(&self.test)
    }
}

/// Loads `<data_dir>/<name>/` (see [`DatasetName::download_instructions`]).
pub fn load_corpus(name: DatasetName, data_dir: &Path) -> Result<Corpus> {
    let dir = data_dir.join(name.name());
    let (mut train, mut test) = match name {
        DatasetName::Usps => {
            let train = find(&dir, &["usps", "zip.train", "usps.train"])?;
            let test = find(&dir, &["usps.t", "zip.test", "usps.test"])?;
            (load_usps(&train)?, load_usps(&test)?)
        }
        _ => {
            let f = |stem: &str| find(&dir, &[stem]);
            (
                load_idx(&f("train-images-idx3-ubyte")?, &f("train-labels-idx1-ubyte")?)?,
                load_idx(&f("t10k-images-idx3-ubyte")?, &f("t10k-labels-idx1-ubyte")?)?,
            )
        }
    };
    train.name = name.name().to_string();
    test.name = name.name().to_string();
    Ok(Corpus { train, test })
}

/// First existing file among the stems, each tried plain, `.gz` and `.bz2`.
fn find(dir: &Path, stems: &[&str]) -> Result<PathBuf> {
    for stem in stems {
        for ext in ["", ".gz", ".bz2"] {
            let p = dir.join(format!("{stem}{ext}"));
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(Error::data(dir, format!("none of {stems:?} (optionally .gz/.bz2) found")))
}

/// Reads a file, decompressing gzip or bzip2 content detected by its magic bytes.
pub fn read_maybe_compressed(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let result = if raw.starts_with(&[0x1f, 0x8b]) {
        flate2::read::MultiGzDecoder::new(&raw[..]).read_to_end(&mut out)
    } else if raw.starts_with(b"BZh") {
        bzip2::read::MultiBzDecoder::new(&raw[..]).read_to_end(&mut out)
    } else {
        return Ok(raw);
    };
    result.map_err(|e| Error::data(path, format!("decompression failed: {e}")))?;
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy(n: usize) -> Dataset {
        let data = (0..n * 4).map(|i| (i % 5) as f32 / 4.0).collect();
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        Dataset::new("toy", Tensor::new(vec![n, 1, 2, 2], data).unwrap(), labels).unwrap()
    }

    #[test]
    fn validation() {
        let t = Tensor::new(vec![1, 1, 1, 2], vec![0.0, 1.5]).unwrap();
        assert!(Dataset::new("x", t, vec![0]).is_err());
        let t = Tensor::new(vec![1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        assert!(Dataset::new("x", t.clone(), vec![10]).is_err());
        assert!(Dataset::new("x", t.clone(), vec![0, 1]).is_err());
        assert!(Dataset::new("x", t, vec![9]).is_ok());
    }

    #[test]
    fn subsample_and_concat() {
        let d = toy(50);
        let s = d.subsample(20, 1).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s, d.subsample(20, 1).unwrap());
        assert_ne!(s, d.subsample(20, 2).unwrap());
        assert_eq!(d.subsample(80, 1).unwrap().len(), 50);
        let c = d.concat(&s).unwrap();
        assert_eq!(c.len(), 70);
        assert_eq!(c.image(55), s.image(5));
        assert_eq!(c.label_histogram().iter().sum::<usize>(), 70);
    }

    #[test]
    fn dataset_names_parse() {
        for d in DatasetName::ALL {
            assert_eq!(d.name().parse::<DatasetName>().unwrap(), d);
            assert!(!d.download_instructions().is_empty());
        }
        assert!("cifar".parse::<DatasetName>().is_err());
    }

    #[test]
    fn missing_directory_is_a_data_error() {
        let err = load_corpus(DatasetName::Kmnist, Path::new("/nonexistent-dir")).unwrap_err();
        assert!(matches!(err, Error::Data { .. }));
    }
}
