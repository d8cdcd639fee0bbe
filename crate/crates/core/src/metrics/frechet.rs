use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{EmbeddingVec, MetricError};

/// Asymmetry allowed before a matrix is rejected, relative to its largest
/// entry (floored at 1).
const SYMMETRY_TOL: f64 = 1e-9;
/// Most negative eigenvalue still treated as zero, relative to the spectral
/// radius (floored at 1).
const PSD_TOL: f64 = 1e-8;

/// Mean and covariance of an embedding set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    n: usize,
}

impl GaussianStats {
    /// Wraps precomputed statistics after checking shape, symmetry and
    /// positive semidefiniteness.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, n: usize) -> Result<Self, MetricError> {
        if n < 2 {
            return Err(MetricError::TooFewVectors(n));
        }
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(MetricError::DimMismatch(mean.len(), cov.nrows()));
        }
        check_symmetric(&cov)?;
        let eig = SymmetricEigen::new(cov.clone());
        check_psd(&eig.eigenvalues)?;
        Ok(GaussianStats { mean, cov, n })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased (n − 1) covariance, symmetrized.
pub fn gaussian_stats(vecs: &[EmbeddingVec]) -> Result<GaussianStats, MetricError> {
    let n = vecs.len();
    if n < 2 {
        return Err(MetricError::TooFewVectors(n));
    }
    let d = vecs[0].dim();
    if let Some(v) = vecs.iter().find(|v| v.dim() != d) {
        return Err(MetricError::DimMismatch(d, v.dim()));
    }
    let data = DMatrix::from_fn(n, d, |i, j| vecs[i].values()[j]);
    let mean: DVector<f64> = data.row_mean().transpose();
    let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianStats::new(mean, cov, n)
}

fn scale_of(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), MetricError> {
    if !m.is_square() {
        return Err(MetricError::NotSymmetric(f64::INFINITY));
    }
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale_of(m) {
        return Err(MetricError::NotSymmetric(asym));
    }
    Ok(())
}

fn check_psd(eigenvalues: &DVector<f64>) -> Result<(), MetricError> {
    let radius = eigenvalues.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    match eigenvalues.iter().copied().find(|&l| l < -PSD_TOL * radius) {
        Some(l) => Err(MetricError::NotPsd(l)),
        None => Ok(()),
    }
}

/// Eigendecomposition of a symmetric PSD matrix. Eigenvalues within
/// rounding noise of zero (below `dim · ε` times the spectral radius) are
/// set to exactly zero, so rank-deficient inputs do not pick up `√ε` terms.
fn clamped_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricError> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    check_psd(&eig.eigenvalues)?;
    let radius = eig.eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
    let noise = m.nrows() as f64 * f64::EPSILON * radius;
    eig.eigenvalues.iter_mut().for_each(|l| {
        if *l <= noise {
            *l = 0.0;
        }
    });
    Ok(eig)
}

/// Principal square root `QΛ^{1/2}Qᵀ` of a symmetric PSD matrix.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
    let eig = clamped_eigen(m)?;
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let r = &eig.eigenvectors * root * eig.eigenvectors.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Fréchet distance between two Gaussians:
/// `‖μ₁−μ₂‖² + Tr(Σ₁) + Tr(Σ₂) − 2·Tr((Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2})`,
/// clamped at zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimMismatch(a.dim(), b.dim()));
    }
    let diff = &a.mean - &b.mean;
    let root_a = matrix_sqrt_psd(&a.cov)?;
    let inner = &root_a * &b.cov * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross_trace: f64 = clamped_eigen(&inner)?.eigenvalues.iter().map(|l| l.sqrt()).sum();
    let d = diff.norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross_trace;
    Ok(d.max(0.0))
}
