use super::{EmbeddingVec, MetricError};

/// Cosine similarity between an image embedding and a text embedding.
pub fn cosine_alignment(img: &EmbeddingVec, txt: &EmbeddingVec) -> Result<f64, MetricError> {
    if img.dim() != txt.dim() {
        return Err(MetricError::DimMismatch(img.dim(), txt.dim()));
    }
    let dot: f64 = img.values().iter().zip(txt.values()).map(|(a, b)| a * b).sum();
    let norm = |v: &EmbeddingVec| v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    let (ni, nt) = (norm(img), norm(txt));
    if ni == 0.0 || nt == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok((dot / (ni * nt)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> EmbeddingVec {
        EmbeddingVec::new(x.to_vec()).unwrap()
    }

    #[test]
    fn basic_cases() {
        let a = v(&[0.3, -1.2, 2.0]);
        assert!((cosine_alignment(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg = v(&[-0.3, 1.2, -2.0]);
        assert!((cosine_alignment(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_alignment(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(cosine_alignment(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(MetricError::ZeroVector));
        assert_eq!(cosine_alignment(&v(&[1.0]), &v(&[1.0, 0.0])), Err(MetricError::DimMismatch(1, 2)));
    }
}
