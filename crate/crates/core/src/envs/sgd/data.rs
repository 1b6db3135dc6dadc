//! Datasets for the learning-rate benchmark: seeded Gaussian blobs, or IDX files.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Features are row-major, `input_dim` values per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn take(&self, dim: usize, range: std::ops::Range<usize>) -> Split {
        Split {
            features: self.features[range.start * dim..range.end * dim].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub input_dim: usize,
    pub classes: usize,
    pub train: Split,
    pub validation: Split,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub input_dim: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub noise_std: f64,
}

/// `classes` Gaussian blobs with standard-normal centers and isotropic noise,
/// labels balanced round-robin, then standardized with training statistics.
pub fn synthetic_blobs(spec: &BlobSpec, rng: &mut Rng) -> Dataset {
    let d = spec.input_dim;
    let centers: Vec<f64> = (0..spec.classes * d).map(|_| StandardNormal.sample(rng)).collect();
    let noise = Normal::new(0.0, spec.noise_std).expect("validated noise");
    let total = spec.train_size + spec.validation_size;
    let mut features = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let c = i % spec.classes;
        labels.push(c);
        features.extend((0..d).map(|j| centers[c * d + j] + noise.sample(rng)));
    }
    // shuffle so that both splits mix classes in random order
    for i in (1..total).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
        for k in 0..d {
            features.swap(i * d + k, j * d + k);
        }
    }
    let all = Split { features, labels };
    let mut ds = Dataset {
        input_dim: d,
        classes: spec.classes,
        train: all.take(d, 0..spec.train_size),
        validation: all.take(d, spec.train_size..total),
    };
    standardize(&mut ds);
    ds
}

/// Rescales every feature to zero mean and unit variance on the training split.
fn standardize(ds: &mut Dataset) {
    let d = ds.input_dim;
    let n = ds.train.len() as f64;
    for j in 0..d {
        let mean = ds.train.features.iter().skip(j).step_by(d).sum::<f64>() / n;
        let var = ds
            .train
            .features
            .iter()
            .skip(j)
            .step_by(d)
            .map(|x| (x - mean).powi(2))
            .sum::<f64>()
            / n;
        let scale = if var.sqrt() > 1e-8 { 1.0 / var.sqrt() } else { 1.0 };
        for split in [&mut ds.train, &mut ds.validation] {
            for x in split.features.iter_mut().skip(j).step_by(d) {
                *x = (*x - mean) * scale;
            }
        }
    }
}

/// A decoded IDX array of unsigned bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Decodes the IDX format: two zero bytes, type code 0x08 (u8), rank, then
/// big-endian u32 dimensions followed by the data.
pub fn parse_idx(bytes: &[u8]) -> std::result::Result<IdxArray, String> {
    if bytes.len() < 4 {
        return Err("file shorter than the IDX magic number".into());
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err("bad IDX magic number".into());
    }
    if bytes[2] != 0x08 {
        return Err(format!("unsupported IDX element type 0x{:02x} (only unsigned bytes)", bytes[2]));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err("truncated IDX dimension header".into());
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| {
            let b = &bytes[4 + 4 * i..8 + 4 * i];
            u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize
        })
        .collect();
    let count: usize = dims.iter().product();
    if bytes.len() != header + count {
        return Err(format!(
            "IDX payload has {} bytes, dimensions {dims:?} require {count}",
            bytes.len() - header
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes).map_err(|message| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message,
    })
}

/// Builds a dataset from IDX images and labels, using the first `train_size`
/// examples for training and the next `validation_size` for validation.
pub fn dataset_from_idx(images: &IdxArray, labels: &IdxArray, train_size: usize, validation_size: usize) -> Result<Dataset> {
    if images.dims.is_empty() || labels.dims.len() != 1 || labels.dims[0] != images.dims[0] {
        return Err(Error::Domain(format!(
            "IDX images {:?} and labels {:?} do not line up",
            images.dims, labels.dims
        )));
    }
    let n = images.dims[0];
    let total = train_size + validation_size;
    if n < total {
        return Err(Error::Domain(format!("IDX files hold {n} examples, {total} requested")));
    }
    let d: usize = images.dims[1..].iter().product();
    let classes = labels.data.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
    let all = Split {
        features: images.data[..total * d].iter().map(|&p| p as f64 / 255.0).collect(),
        labels: labels.data[..total].iter().map(|&l| l as usize).collect(),
    };
    let mut ds = Dataset {
        input_dim: d,
        classes,
        train: all.take(d, 0..train_size),
        validation: all.take(d, train_size..total),
    };
    standardize(&mut ds);
    Ok(ds)
}
