//! Tensors, the autodiff tape, and the optimizer.

pub mod adam;
pub mod fd;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use adam::{l2_penalty, AdamState};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
