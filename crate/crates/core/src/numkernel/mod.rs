//! Dense f64 tensors, a recording tape for reverse-mode gradients, and a
//! finite-difference checker.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{compare_with_differences, fd_check, relative_error, FdReport};
pub use params::{Gradients, ParamId, ParamSet};
pub use tape::{bce_one_hot, sigmoid, softmax, Tape, Var, BCE_EPS};
pub use tensor::{axpy, dot, Shape, Tensor};
