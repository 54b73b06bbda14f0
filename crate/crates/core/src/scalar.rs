//! Float-generic numeric kernels shared across the crate.
//!
//! The math here (information content, cosine distance, embedding
//! aggregation) is agnostic to the scalar width; the rest of the crate
//! instantiates it at [`crate::Scalar`].

use num_traits::Float;

use crate::error::MathError;

/// A fixed-dimension embedding vector over scalar type `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<F: Float> {
    components: Vec<F>,
}

impl<F: Float> EmbeddingVector<F> {
    /// Build a vector, rejecting non-finite components.
    pub fn new(components: Vec<F>) -> Result<Self, MathError> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(MathError::NonFinite);
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[F] {
        &self.components
    }

    pub fn norm(&self) -> F {
        self.components
            .iter()
            .fold(F::zero(), |acc, &c| acc + c * c)
            .sqrt()
    }

    pub fn dot(&self, other: &Self) -> F {
        self.components
            .iter()
            .zip(&other.components)
            .fold(F::zero(), |acc, (&a, &b)| acc + a * b)
    }

    /// Arithmetic mean of a non-empty set of equal-dimension vectors.
    pub fn mean(vectors: &[Self]) -> Result<Self, MathError> {
        let first = vectors.first().ok_or(MathError::EmptyMean)?;
        let dim = first.dim();
        let mut acc = vec![F::zero(); dim];
        for v in vectors {
            if v.dim() != dim {
                return Err(MathError::DimensionMismatch {
                    left: dim,
                    right: v.dim(),
                });
            }
            for (a, &c) in acc.iter_mut().zip(&v.components) {
                *a = *a + c;
            }
        }
        let n = F::from(vectors.len()).expect("vector count fits in float");
        Ok(Self {
            components: acc.into_iter().map(|a| a / n).collect(),
        })
    }
}

/// Cosine distance `1 - a.b / (|a||b|)`, in `[0, 2]`.
pub fn cosine_distance<F: Float>(
    a: &EmbeddingVector<F>,
    b: &EmbeddingVector<F>,
) -> Result<F, MathError> {
    if a.dim() != b.dim() {
        return Err(MathError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == F::zero() || nb == F::zero() {
        return Err(MathError::ZeroVector);
    }
    let d = F::one() - a.dot(b) / (na * nb);
    // clamp rounding noise back into [0, 2]
    Ok(d.max(F::zero()).min(F::from(2.0).unwrap()))
}

/// Information content of a probability: `-ln(p)` for `p` in `(0, 1]`.
pub fn information_content<F: Float>(p: F) -> Result<F, MathError> {
    if !(p > F::zero() && p <= F::one()) {
        return Err(MathError::OutOfRange);
    }
    Ok(-p.ln())
}
