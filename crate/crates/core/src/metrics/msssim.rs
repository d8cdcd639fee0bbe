use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GrayImage, MetricError};

/// Per-scale exponents, finest first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let center = (WINDOW / 2) as f64;
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - center;
        *w = (-(d * d) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Separable Gaussian filter with "valid" borders: the output is
/// `(w - 10) x (h - 10)`.
fn filter_valid(data: &[f64], w: usize, h: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().zip(&row[x..x + WINDOW]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean luminance and contrast-structure terms of single-scale SSIM.
fn ssim_terms(a: &[f64], b: &[f64], w: usize, h: usize, kernel: &[f64; WINDOW]) -> (f64, f64) {
    let product = |f: fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
    };
    let mu_a = filter_valid(a, w, h, kernel);
    let mu_b = filter_valid(b, w, h, kernel);
    let aa = filter_valid(&product(|x, _| x * x), w, h, kernel);
    let bb = filter_valid(&product(|_, y| y * y), w, h, kernel);
    let ab = filter_valid(&product(|x, y| x * y), w, h, kernel);

    let n = mu_a.len() as f64;
    let (mut lum, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = aa[i] - ma * ma;
        let var_b = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        lum += (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        cs += (2.0 * cov + C2) / (var_a + var_b + C2);
    }
    (lum / n, cs / n)
}

fn downsample(data: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (nw, nh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            let at = |dx: usize, dy: usize| data[(2 * y + dy) * w + 2 * x + dx];
            out.push((at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)) / 4.0);
        }
    }
    (out, nw, nh)
}

/// Number of dyadic scales (at most 5) at which the window still fits.
fn scale_count(w: usize, h: usize) -> usize {
    let mut d = w.min(h);
    let mut n = 0;
    while n < MS_SSIM_WEIGHTS.len() && d >= WINDOW {
        n += 1;
        d /= 2;
    }
    n
}

/// Multi-scale SSIM with an 11x11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03 on the unit range and the standard five scale weights.
///
/// Contrast-structure enters at every scale, luminance only at the
/// coarsest. Images whose smaller side is below 176 px use fewer scales with
/// the leading weights renormalized to sum to one. Negative per-scale terms
/// are clamped to zero.
pub fn ms_ssim(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let scales = scale_count(a.width(), a.height());
    if scales == 0 {
        return Err(MetricError::ImageTooSmall(a.width(), a.height()));
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    // The published weights sum to 1.0001; they are used as-is at full depth.
    let total: f64 = if scales == MS_SSIM_WEIGHTS.len() { 1.0 } else { weights.iter().sum() };

    let kernel = gaussian_kernel();
    let (mut x, mut y) = (a.pixels().to_vec(), b.pixels().to_vec());
    let (mut w, mut h) = (a.width(), a.height());
    let mut score = 1.0;
    for (scale, weight) in weights.iter().enumerate() {
        let exponent = weight / total;
        let (lum, cs) = ssim_terms(&x, &y, w, h, &kernel);
        score *= cs.max(0.0).powf(exponent);
        if scale + 1 == scales {
            score *= lum.max(0.0).powf(exponent);
        } else {
            let (nx, nw, nh) = downsample(&x, w, h);
            let (ny, _, _) = downsample(&y, w, h);
            (x, y, w, h) = (nx, ny, nw, nh);
        }
    }
    Ok(score.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSummary {
    pub mean: f64,
    /// Population standard deviation over pairs.
    pub std: f64,
    pub pairs: usize,
}

/// MS-SSIM of every unordered pair `(i, j)`, `i < j`, in lexicographic
/// order. Pairs are evaluated in parallel.
pub fn pairwise_scores(images: &[GrayImage]) -> Result<Vec<f64>, MetricError> {
    let pairs: Vec<(usize, usize)> = (0..images.len())
        .flat_map(|i| (i + 1..images.len()).map(move |j| (i, j)))
        .collect();
    pairs.par_iter().map(|&(i, j)| ms_ssim(&images[i], &images[j])).collect()
}

/// MS-SSIM over all unordered pairs of a group.
pub fn pairwise_ms_ssim(images: &[GrayImage]) -> Result<PairwiseSummary, MetricError> {
    if images.len() < 2 {
        return Err(MetricError::TooFewImages(images.len()));
    }
    let scores = pairwise_scores(images)?;
    let (mean, std) = mean_std(&scores);
    Ok(PairwiseSummary { mean, std, pairs: scores.len() })
}

/// Mean and population standard deviation, summed in slice order.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        let pixels = (0..w * h).map(|i| ((i % w) + (i / w)) as f64 / (w + h) as f64).collect();
        GrayImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
        assert!(k[5] > k[4]);
    }

    #[test]
    fn scale_counts() {
        assert_eq!(scale_count(176, 200), 5);
        assert_eq!(scale_count(175, 200), 4);
        assert_eq!(scale_count(11, 11), 1);
        assert_eq!(scale_count(10, 64), 0);
    }

    #[test]
    fn constant_pair_is_luminance_only() {
        let a = GrayImage::constant(192, 192, 0.25).unwrap();
        let b = GrayImage::constant(192, 192, 0.5).unwrap();
        let lum: f64 = (2.0 * 0.25 * 0.5 + C1) / (0.25 * 0.25 + 0.5 * 0.5 + C1);
        let expected = lum.powf(0.1333);
        let got = ms_ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!((expected - 0.9707).abs() < 1e-4);
    }

    #[test]
    fn small_image_renormalizes_weights() {
        // 64 px → scales at 64, 32, 16: three weights renormalized.
        let a = GrayImage::constant(64, 64, 0.0).unwrap();
        let b = GrayImage::constant(64, 64, 1.0).unwrap();
        let w = &MS_SSIM_WEIGHTS[..3];
        let expected = (C1 / (1.0 + C1)).powf(w[2] / w.iter().sum::<f64>());
        assert!((ms_ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn self_similarity_and_errors() {
        let a = ramp(48, 40);
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let b = ramp(40, 48);
        assert!(matches!(ms_ssim(&a, &b), Err(MetricError::DimensionMismatch(..))));
        let tiny = GrayImage::constant(10, 10, 0.5).unwrap();
        assert_eq!(ms_ssim(&tiny, &tiny), Err(MetricError::ImageTooSmall(10, 10)));
    }

    #[test]
    fn pairwise_counts() {
        let a = ramp(32, 32);
        let s = pairwise_ms_ssim(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(s.pairs, 1);
        assert!((s.mean - 1.0).abs() < 1e-12);
        assert_eq!(s.std, 0.0);
        let c = GrayImage::constant(32, 32, 0.3).unwrap();
        assert_eq!(pairwise_ms_ssim(&[a.clone(), c.clone(), a.clone()]).unwrap().pairs, 3);
        let ten = vec![c; 10];
        assert_eq!(pairwise_ms_ssim(&ten).unwrap().pairs, 45);
        assert_eq!(pairwise_ms_ssim(&[a]), Err(MetricError::TooFewImages(1)));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[0.2, 0.4]);
        assert!((m - 0.3).abs() < 1e-15);
        assert!((s - 0.1).abs() < 1e-15);
    }
}
