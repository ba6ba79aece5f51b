//! Differentiable primitives recorded on a [`Tape`](crate::numerics::Tape).

mod conv;
mod elementwise;
mod norm;
mod reduce;
mod shape;

pub use conv::{conv1d_out_len, Conv1dOpts, Conv2dOpts};
pub use elementwise::{anti_wrap_scalar, gelu_scalar};
pub use shape::reflect_index;
