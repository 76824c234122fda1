//! Training data: 2-D Gaussian mixtures and IDX image files.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_DIM: usize = 784;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("{path}: bad magic number, expected {expected:#010x}, found {actual:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        actual: u32,
    },
    #[error("{path}: truncated, expected {expected} bytes of payload, found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: images are {rows}x{cols}, only 28x28 ({IMAGE_DIM} pixels) is supported")]
    UnsupportedDims {
        path: String,
        rows: usize,
        cols: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Anything that can hand out training batches.
pub trait DataSource {
    fn dim(&self) -> usize;
    /// `n x dim` batch.
    fn sample_batch(&self, n: usize, rng: &mut Rng) -> Tensor;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub centers: Vec<[f64; 2]>,
    pub std: f64,
    pub weights: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(centers: Vec<[f64; 2]>, std: f64, weights: Vec<f64>) -> Result<Self> {
        let spec = Self {
            centers,
            std,
            weights,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(DataError::InvalidMixture("no modes".into()));
        }
        if self.weights.len() != self.centers.len() {
            return Err(DataError::InvalidMixture(format!(
                "{} weights for {} modes",
                self.weights.len(),
                self.centers.len()
            )));
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(DataError::InvalidMixture(format!(
                "std must be positive, got {}",
                self.std
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(DataError::InvalidMixture("negative weight".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidMixture(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Index of the nearest center and the distance to it.
    pub fn nearest(&self, p: [f64; 2]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

/// `k` equally weighted modes at angles `2*pi*j/k` on a circle.
pub fn make_ring_mixture(k: usize, radius: f64, std: f64) -> Result<MixtureSpec> {
    if k == 0 {
        return Err(DataError::InvalidMixture("k must be at least 1".into()));
    }
    if !(radius >= 0.0) {
        return Err(DataError::InvalidMixture(format!(
            "radius must be non-negative, got {radius}"
        )));
    }
    let centers = (0..k)
        .map(|j| {
            let a = std::f64::consts::TAU * j as f64 / k as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();
    MixtureSpec::new(centers, std, vec![1.0 / k as f64; k])
}

/// `n x 2` draws: mode by weight, then an isotropic Gaussian around its center.
pub fn sample_real(spec: &MixtureSpec, n: usize, rng: &mut Rng) -> Tensor {
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let c = spec.centers[rng.categorical(&spec.weights)];
        data.push(c[0] + spec.std * rng.normal());
        data.push(c[1] + spec.std * rng.normal());
    }
    Tensor::from_vec(n, 2, data)
}

impl DataSource for MixtureSpec {
    fn dim(&self) -> usize {
        2
    }

    fn sample_batch(&self, n: usize, rng: &mut Rng) -> Tensor {
        sample_real(self, n, rng)
    }
}

/// Images scaled to `[-1, 1]`, one row per image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    pub images: Tensor,
    pub labels: Option<Vec<u8>>,
    pub source: String,
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.images.rows
    }

    pub fn is_empty(&self) -> bool {
        self.images.rows == 0
    }

    /// The first `n` images (or all of them).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images.slice_rows(0, n),
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            source: format!("{} (first {n})", self.source),
        }
    }
}

impl DataSource for ImageDataset {
    fn dim(&self) -> usize {
        self.images.cols
    }

    /// Uniform draws with replacement.
    fn sample_batch(&self, n: usize, rng: &mut Rng) -> Tensor {
        let d = self.images.cols;
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(self.images.row(rng.below(self.len())));
        }
        Tensor::from_vec(n, d, data)
    }
}

/// `x -> (x/255 - 0.5) / 0.5`
pub fn normalize_pixel(x: u8) -> f64 {
    (x as f64 / 255.0 - 0.5) / 0.5
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = fs::read(path).map_err(io)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.display().to_string(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn parse_header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let actual = be_u32(bytes, 0, path)?;
    if actual != magic {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected: magic,
            actual,
        });
    }
    (0..dims)
        .map(|i| be_u32(bytes, 4 + 4 * i, path).map(|v| v as usize))
        .collect()
}

fn payload<'a>(bytes: &'a [u8], path: &Path, header: usize, len: usize) -> Result<&'a [u8]> {
    let body = &bytes[header.min(bytes.len())..];
    if body.len() < len {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected: len,
            found: body.len(),
        });
    }
    Ok(&body[..len])
}

/// Reads an IDX image file (and optionally its label file); gzip is detected
/// from the content.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<ImageDataset> {
    let bytes = read_maybe_gz(images)?;
    let h = parse_header(&bytes, images, IDX_IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (h[0], h[1], h[2]);
    if rows * cols != IMAGE_DIM {
        return Err(DataError::UnsupportedDims {
            path: images.display().to_string(),
            rows,
            cols,
        });
    }
    let pixels = payload(&bytes, images, 16, n * IMAGE_DIM)?;
    let data = pixels.iter().map(|&p| normalize_pixel(p)).collect();

    let labels = match labels {
        Some(path) => {
            let lb = read_maybe_gz(path)?;
            let count = parse_header(&lb, path, IDX_LABELS_MAGIC, 1)?[0];
            if count != n {
                return Err(DataError::CountMismatch {
                    images: n,
                    labels: count,
                });
            }
            Some(payload(&lb, path, 8, count)?.to_vec())
        }
        None => None,
    };
    Ok(ImageDataset {
        images: Tensor::from_vec(n, IMAGE_DIM, data),
        labels,
        source: images.display().to_string(),
    })
}

/// Encodes an IDX image file body (uncompressed).
pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Procedural 28x28 "digit-like" images for smoke runs when no real
/// dataset is on disk: each class is a ring, bar or cross at a jittered
/// position. Returns `(pixels, labels)`.
pub fn synthetic_digits(n: usize, rng: &mut Rng) -> (Vec<u8>, Vec<u8>) {
    let mut pixels = vec![0u8; n * IMAGE_DIM];
    let mut labels = Vec::with_capacity(n);
    for img in pixels.chunks_mut(IMAGE_DIM) {
        let class = rng.below(10) as u8;
        labels.push(class);
        let cx = 14.0 + rng.uniform_in(-2.0, 2.0);
        let cy = 14.0 + rng.uniform_in(-2.0, 2.0);
        let r = 5.0 + class as f64 * 0.6;
        for y in 0..28 {
            for x in 0..28 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let ink = match class % 3 {
                    0 => (1.5 - ((dx * dx + dy * dy).sqrt() - r).abs()).max(0.0),
                    1 => (1.5 - dx.abs()).max(0.0) * f64::from(dy.abs() < r),
                    _ => (1.5 - dx.abs().min(dy.abs())).max(0.0) * f64::from(dx.abs().max(dy.abs()) < r),
                };
                img[y * 28 + x] = (ink.min(1.0) * 255.0).round() as u8;
            }
        }
    }
    (pixels, labels)
}
