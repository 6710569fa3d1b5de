//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{analytic_grads, grad_check, grad_check_coords, relative_error, GradCheckReport};
pub use tape::{Activation, Padding, PoolMode, Tape, Var};
pub use tensor::Tensor;
