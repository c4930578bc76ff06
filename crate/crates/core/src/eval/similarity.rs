//! Cosine similarity between embedding-set centroids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::jsonl::{read_all, JsonlError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub label: String,
    pub vectors: Vec<Vec<f64>>,
}

/// One line of `embeddings.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingLine {
    pub label: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum SimilarityError {
    #[error("embedding set `{0}` is empty")]
    Empty(String),
    #[error("dimension mismatch: expected {expected}, found {found} in `{label}`")]
    DimensionMismatch { label: String, expected: usize, found: usize },
    #[error("centroid of `{0}` has zero norm")]
    DegenerateCentroid(String),
    #[error("no vectors labelled `{0}`")]
    UnknownLabel(String),
    #[error(transparent)]
    Io(#[from] JsonlError),
}

impl EmbeddingSet {
    /// Load the vectors of `path`, keeping only lines labelled `label` when
    /// given. The set takes the first line's label otherwise.
    pub fn from_jsonl(path: &Path, label: Option<&str>) -> Result<Self, SimilarityError> {
        let lines: Vec<EmbeddingLine> = read_all(path)?;
        let label = match label {
            Some(l) => l.to_string(),
            None => lines
                .first()
                .map(|l| l.label.clone())
                .unwrap_or_else(|| path.display().to_string()),
        };
        let vectors: Vec<Vec<f64>> = lines.into_iter().filter(|l| l.label == label).map(|l| l.vector).collect();
        if vectors.is_empty() {
            return Err(SimilarityError::UnknownLabel(label));
        }
        Ok(Self { label, vectors })
    }

    pub fn dimension(&self) -> Result<usize, SimilarityError> {
        let first = self.vectors.first().ok_or_else(|| SimilarityError::Empty(self.label.clone()))?;
        let dim = first.len();
        if let Some(v) = self.vectors.iter().find(|v| v.len() != dim) {
            return Err(SimilarityError::DimensionMismatch {
                label: self.label.clone(),
                expected: dim,
                found: v.len(),
            });
        }
        Ok(dim)
    }

    pub fn centroid(&self) -> Result<Vec<f64>, SimilarityError> {
        let dim = self.dimension()?;
        let mut sum = vec![0.0; dim];
        for v in &self.vectors {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        let n = self.vectors.len() as f64;
        Ok(sum.into_iter().map(|s| s / n).collect())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn centroid_similarity(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64, SimilarityError> {
    let ca = a.centroid()?;
    let cb = b.centroid()?;
    if ca.len() != cb.len() {
        return Err(SimilarityError::DimensionMismatch {
            label: b.label.clone(),
            expected: ca.len(),
            found: cb.len(),
        });
    }
    let zero = |c: &[f64]| c.iter().all(|x| *x == 0.0);
    if zero(&ca) {
        return Err(SimilarityError::DegenerateCentroid(a.label.clone()));
    }
    if zero(&cb) {
        return Err(SimilarityError::DegenerateCentroid(b.label.clone()));
    }
    cosine(&ca, &cb).ok_or_else(|| SimilarityError::DegenerateCentroid(a.label.clone()))
}
