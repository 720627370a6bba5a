//! Dense embedding vectors and exact cosine similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A full-precision embedding vector of dimension `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseVector(Vec<f32>);

impl DenseVector {
    /// Wraps `values`, rejecting non-finite entries.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite vector entry at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl AsRef<[f32]> for DenseVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

impl From<DenseVector> for Vec<f32> {
    fn from(v: DenseVector) -> Self {
        v.0
    }
}

/// Result of [`cosine_exact`]. `zero_norm` is set when either input has zero
/// length, in which case `value` is defined as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    pub zero_norm: bool,
}

pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum()
}

pub fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// Exact cosine similarity, clamped to [-1, 1].
pub fn cosine_exact(u: &[f32], v: &[f32]) -> Result<Cosine> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Ok(Cosine {
            value: 0.0,
            zero_norm: true,
        });
    }
    Ok(Cosine {
        value: (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0),
        zero_norm: false,
    })
}

/// Cosine against a vector whose norm is already known. Zero norms give 0.
#[inline]
pub(crate) fn cosine_with_norms(u: &[f32], u_norm: f64, v: &[f32], v_norm: f64) -> f64 {
    if u_norm == 0.0 || v_norm == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (u_norm * v_norm)).clamp(-1.0, 1.0)
}
