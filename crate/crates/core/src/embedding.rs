//! Unit-norm embedding containers and the dot product.
//!
//! # Canonical representation
//!
//! Embeddings live in f64 for arithmetic, but every stored component is
//! exactly representable in IEEE binary32. The on-disk matrix format is
//! binary32, so keeping the in-memory values on that grid makes
//! write→read round trips bitwise lossless and lets thresholds recomputed
//! after a reload match the stored ones to the last ulp.
//!
//! [`normalize`] therefore ends by rounding each component through f32.
//! Rounding to the f32 grid is idempotent, which in turn makes
//! `normalize` itself bitwise idempotent: a canonical vector has norm
//! within ~1.2e-7 of 1, the renormalization step is skipped (the skip
//! window is 1e-6), and the final rounding is a no-op.

use crate::error::{Error, Result};

/// Norm floor below which a vector is considered zero and unnormalizable.
pub const ZERO_NORM_FLOOR: f64 = 1e-6;

/// If a vector's norm is already within this window of 1, normalization
/// skips the division. Canonical vectors land inside the window, which is
/// what makes repeated normalization a bitwise no-op.
const UNIT_SKIP_WINDOW: f64 = 1e-6;

/// Ingestion window: rows read from disk whose norm is within this of 1
/// are accepted as-is (they are already canonical binary32 data);
/// anything farther off is silently renormalized.
pub const INGEST_UNIT_WINDOW: f64 = 1e-4;

/// A unit-norm embedding vector.
///
/// Invariants: dimension ≥ 2, every component exactly binary32-representable,
/// Euclidean norm within 1e-4 of 1 (within ~1.2e-7 when produced by
/// [`normalize`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Components as a slice.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Dimensionality.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Consume into the raw component vector.
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Ingest a row that is supposed to already be unit norm (e.g. read
    /// from a matrix file). Rows within [`INGEST_UNIT_WINDOW`] of unit
    /// norm are kept bit-for-bit; rows farther off are renormalized;
    /// rows below [`ZERO_NORM_FLOOR`] are rejected.
    ///
    /// The caller must supply binary32-canonical component values (true
    /// for anything decoded from the binary matrix format).
    pub(crate) fn ingest_near_unit(values: Vec<f64>) -> Result<Embedding> {
        if values.len() < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: values.len(),
            });
        }
        let n = norm(&values);
        if n < ZERO_NORM_FLOOR {
            return Err(Error::ZeroNorm { norm: n });
        }
        if (n - 1.0).abs() <= INGEST_UNIT_WINDOW {
            Ok(Embedding { values })
        } else {
            normalize(&values)
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scale a vector to unit norm and snap it onto the canonical binary32
/// grid. Direction is preserved; the result's norm is within ~1.2e-7 of 1.
///
/// Bitwise idempotent: `normalize(normalize(v).values()) == normalize(v)`.
///
/// Errors: [`Error::ZeroNorm`] if `‖v‖ < 1e-6`; [`Error::DimensionMismatch`]
/// if `v` has fewer than 2 components.
pub fn normalize(v: &[f64]) -> Result<Embedding> {
    if v.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: v.len(),
        });
    }
    let n = norm(v);
    if n < ZERO_NORM_FLOOR {
        return Err(Error::ZeroNorm { norm: n });
    }
    let scaled: Vec<f64> = if (n - 1.0).abs() <= UNIT_SKIP_WINDOW {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    };
    let values = scaled.iter().map(|&x| x as f32 as f64).collect();
    Ok(Embedding { values })
}

/// Dot product of two embeddings of equal dimension.
///
/// Errors: [`Error::DimensionMismatch`].
pub fn dot(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(dot_slices(a.values(), b.values()))
}

/// Plain sequential dot product over equal-length slices. The sequential
/// order is part of the determinism contract: every code path that
/// compares scores must accumulate in the same order.
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A dense row-major matrix of unit-norm embeddings (N ≥ 1 rows).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
    dim: usize,
}

impl EmbeddingMatrix {
    /// Build from owned rows. All rows must share one dimension; the
    /// matrix must be nonempty.
    pub fn from_rows(rows: Vec<Embedding>) -> Result<EmbeddingMatrix> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyInput {
                context: "embedding matrix with zero rows",
            });
        };
        let dim = first.dim();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in &rows {
            if row.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.dim(),
                });
            }
            data.extend_from_slice(row.values());
        }
        Ok(EmbeddingMatrix { data, dim })
    }

    /// Build from a flat row-major buffer of already-ingested rows.
    pub(crate) fn from_flat(data: Vec<f64>, dim: usize) -> Result<EmbeddingMatrix> {
        if dim < 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: dim });
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::EmptyInput {
                context: "flat matrix buffer empty or not a multiple of dim",
            });
        }
        Ok(EmbeddingMatrix { data, dim })
    }

    /// Number of rows N.
    pub fn nrows(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Dimensionality z.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Borrow row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterate over rows as slices.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Copy row `i` out as an [`Embedding`] (assumes the row satisfies
    /// the ingestion invariants, which holds for every constructor).
    pub fn embedding(&self, i: usize) -> Embedding {
        Embedding {
            values: self.row(i).to_vec(),
        }
    }

    /// The flat row-major buffer.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// One record of a paired video–text stream.
///
/// `video` and `text` are the primary-model embeddings (v_t, s_t);
/// `alt_video`/`alt_text` optionally carry a second model's embeddings of
/// the same clip and caption for the contrastive-pair baseline and may
/// use a different dimension than the primary pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    pub id: String,
    pub video: Embedding,
    pub text: Embedding,
    pub raw_text: Option<String>,
    pub alt_video: Option<Embedding>,
    pub alt_text: Option<Embedding>,
}

impl StreamRecord {
    /// Check the cross-field invariants: primary pair shares one
    /// dimension, and the alternate pair (when present) shares one too.
    pub fn validate(&self) -> Result<()> {
        if self.video.dim() != self.text.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.video.dim(),
                got: self.text.dim(),
            });
        }
        match (&self.alt_video, &self.alt_text) {
            (Some(av), Some(at)) if av.dim() != at.dim() => Err(Error::DimensionMismatch {
                expected: av.dim(),
                got: at.dim(),
            }),
            _ => Ok(()),
        }
    }
}
