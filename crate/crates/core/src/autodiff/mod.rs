//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use optim::{adam_step, sgd_step, CosineSchedule, OptimState};
pub use tape::{Gradients, Primitive, Tape, Var, SIGMOID_CLAMP};
pub use tensor::Tensor;
