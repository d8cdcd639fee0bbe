//! Baseline image metrics: pairwise MS-SSIM for diversity, Fréchet distance
//! between embedding distributions, and cosine image-text alignment.
//!
//! Embeddings are read from files; no encoder runs here.

mod align;
mod frechet;
mod io;
mod msssim;

use thiserror::Error;

pub use align::cosine_alignment;
pub use frechet::{frechet_distance, gaussian_stats, matrix_sqrt_psd, GaussianStats};
pub use io::{load_embedding_ref, load_embeddings, load_image, parse_embeddings};
pub use msssim::{ms_ssim, pairwise_ms_ssim, pairwise_scores, PairwiseSummary, MS_SSIM_WEIGHTS};
pub(crate) use msssim::mean_std as mean_std_of;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the 11x11 window")]
    ImageTooSmall(usize, usize),
    #[error("need at least 2 images, got {0}")]
    TooFewImages(usize),
    #[error("need at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

/// Single-channel image, row-major, intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, MetricError> {
        if width == 0 || height == 0 {
            return Err(MetricError::Invalid("image has a zero dimension".into()));
        }
        if pixels.len() != width * height {
            return Err(MetricError::Invalid(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(MetricError::Invalid(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self, MetricError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// A finite embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVec(Vec<f64>);

impl EmbeddingVec {
    pub fn new(values: Vec<f64>) -> Result<Self, MetricError> {
        if values.is_empty() {
            return Err(MetricError::Invalid("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::Invalid("non-finite embedding value".into()));
        }
        Ok(EmbeddingVec(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}
