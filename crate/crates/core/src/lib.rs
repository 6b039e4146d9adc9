//! Code watermarking through semantics-preserving rewrites.

mod error;
pub mod attacks;
pub mod extraction;
pub mod harness;
pub mod insertion;
pub mod nn;
pub mod syntax;
pub mod trainer;
pub mod transform;
pub mod zk;

pub use error::{Error, Result};
