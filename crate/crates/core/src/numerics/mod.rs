//! Dense `f64` tensors, a reverse-mode tape, and the Adam update.

mod optim;
mod tape;
mod tensor;

pub use optim::{Adam, AdamConfig};
pub use tape::{AttentionSpec, Gradients, LossReduction, Tape, Var};
pub use tensor::Tensor;

/// Target label that contributes nothing to loss or gradient.
pub const IGNORE_INDEX: i64 = -100;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected rank-{expected} tensor, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("{op}: expected a matrix, got shape {shape:?}")]
    OpRank { op: &'static str, shape: Vec<usize> },
    #[error("shape {shape:?} does not match {len} data values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have differing lengths")]
    RaggedRows,
    #[error("backward requires a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("every target is the ignore index; nothing to supervise")]
    NoSupervisedTokens,
    #[error("target {target} outside vocabulary of size {vocab}")]
    TargetOutOfRange { target: i64, vocab: usize },
    #[error("{len} targets for {rows} logit rows")]
    TargetsLength { rows: usize, len: usize },
    #[error("{what} index {index} out of range for length {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("gather needs at least one source")]
    EmptyGather,
    #[error("d_model {d_model} is not divisible by {heads} heads")]
    Heads { d_model: usize, heads: usize },
    #[error("{rows} rows cannot be split into segments of {seq_len}")]
    Segments { rows: usize, seq_len: usize },
    #[error("key mask has {len} entries for {rows} rows")]
    MaskLength { rows: usize, len: usize },
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

/// Row-wise softmax of a `rows × cols` matrix.
pub fn softmax_rows(data: &[f64], cols: usize) -> Vec<f64> {
    let mut out = data.to_vec();
    for row in out.chunks_mut(cols) {
        softmax_in_place(row);
    }
    out
}

/// Plain matrix product of two rank-2 tensors, without recording anything.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(NumericsError::Shape {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Tensor::new(vec![m, n], tape::matmul_raw(a.data(), b.data(), m, k, n))
}
