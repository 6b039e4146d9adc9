//! Small dense neural-network toolkit with hand-written backward passes.

pub mod layers;
pub mod loss;
pub mod optim;
pub mod serialize;
pub mod tensor;

pub use layers::{BatchNorm, Linear};
pub use optim::AdamW;
pub use tensor::{Scalar, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("model file: {0}")]
    Format(String),
}
