//! Unit-norm semantic embedding vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A unit-norm embedding vector. Construction normalizes, so the
/// `|‖e‖ − 1| < 1e-4` invariant holds for every live value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Build from raw components, normalizing to unit Euclidean norm.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::ZeroEmbedding);
        }
        Ok(Embedding(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity; errors on dimension mismatch.
    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Component sum of several embeddings (not normalized).
    pub fn component_sum<'a>(items: impl IntoIterator<Item = &'a Embedding>) -> Vec<f64> {
        let mut acc: Vec<f64> = Vec::new();
        for e in items {
            if acc.is_empty() {
                acc = vec![0.0; e.dim()];
            }
            for (a, v) in acc.iter_mut().zip(e.0.iter()) {
                *a += v;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_on_construction() {
        let e = Embedding::from_raw(vec![0.0, 2.0]).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-6);
        assert_eq!(e.values(), &[0.0, 1.0]);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(matches!(
            Embedding::from_raw(vec![0.0, 0.0]),
            Err(Error::ZeroEmbedding)
        ));
    }

    #[test]
    fn dot_checks_dimensions() {
        let a = Embedding::from_raw(vec![1.0, 0.0]).unwrap();
        let b = Embedding::from_raw(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(a.dot(&b), Err(Error::DimensionMismatch(2, 3))));
    }
}
