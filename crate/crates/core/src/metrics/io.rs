use std::path::Path;

use image::DynamicImage;

use super::{EmbeddingVec, GrayImage, MetricError};

fn io_err(path: &Path, reason: impl ToString) -> MetricError {
    MetricError::Io { path: path.display().to_string(), reason: reason.to_string() }
}

/// Reads an 8- or 16-bit grayscale PNG/PGM and rescales it to [0, 1] by the
/// maximum code value of its bit depth.
pub fn load_image(path: &Path) -> Result<GrayImage, MetricError> {
    let img = image::open(path).map_err(|e| io_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|p| p as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().into_iter().map(|p| p as f64 / 65535.0).collect()
        }
        other => {
            return Err(io_err(path, format!("expected grayscale, got {:?}", other.color())));
        }
    };
    GrayImage::new(w, h, pixels)
}

/// Parses embeddings from CSV (one vector per row, optional header row) or
/// a JSON array of arrays. JSON is detected by a leading `[`.
pub fn parse_embeddings(bytes: &[u8]) -> Result<Vec<EmbeddingVec>, MetricError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MetricError::Invalid(e.to_string()))?;
    let rows: Vec<Vec<f64>> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| MetricError::Invalid(e.to_string()))?
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| MetricError::Invalid(e.to_string()))?;
            let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if i == 0 => continue,
                Err(e) => return Err(MetricError::Invalid(format!("row {i}: {e}"))),
            }
        }
        rows
    };
    let vecs = rows.into_iter().map(EmbeddingVec::new).collect::<Result<Vec<_>, _>>()?;
    if let Some(first) = vecs.first() {
        if let Some(v) = vecs.iter().find(|v| v.dim() != first.dim()) {
            return Err(MetricError::DimMismatch(first.dim(), v.dim()));
        }
    }
    Ok(vecs)
}

pub fn load_embeddings(path: &Path) -> Result<Vec<EmbeddingVec>, MetricError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    parse_embeddings(&bytes).map_err(|e| io_err(path, e))
}

/// Resolves an embedding reference: `file` (which must hold exactly one
/// vector) or `file#row` (0-based row). Relative paths resolve against
/// `base`.
pub fn load_embedding_ref(reference: &str, base: &Path) -> Result<EmbeddingVec, MetricError> {
    let (file, row) = match reference.rsplit_once('#') {
        Some((file, row)) => {
            let row = row
                .parse::<usize>()
                .map_err(|_| MetricError::Invalid(format!("bad row in reference {reference:?}")))?;
            (file, Some(row))
        }
        None => (reference, None),
    };
    let path = base.join(file);
    let mut vecs = load_embeddings(&path)?;
    match row {
        Some(r) if r < vecs.len() => Ok(vecs.swap_remove(r)),
        Some(r) => Err(io_err(&path, format!("row {r} out of range ({} rows)", vecs.len()))),
        None if vecs.len() == 1 => Ok(vecs.remove(0)),
        None => Err(io_err(&path, format!("expected one vector, found {}", vecs.len()))),
    }
}
