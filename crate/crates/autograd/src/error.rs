use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} cannot hold {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("{op}: every position is masked, attention is empty")]
    EmptyAttention { op: &'static str },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("{op}: index {index} out of range for extent {extent}")]
    Index {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward already ran on this graph; call reset_grads first")]
    BackwardAlreadyRun,
}
