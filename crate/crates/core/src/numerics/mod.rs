//! Minimal reverse-mode differentiable numerics: tensors, a recording tape,
//! the primitive ops the vocoder needs, and AdamW.

mod adamw;
mod float;
pub mod ops;
mod params;
mod tape;
mod tensor;

pub use adamw::{AdamW, AdamWConfig};
pub use float::{gemm, Float, MatRef, Precision};
pub use ops::{Conv1dOpts, Conv2dOpts};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
