//! Minimal dense-tensor engine: the op set the encoder needs, each with a
//! reverse-mode gradient, plus a finite-difference checker.

mod autograd;
mod gradcheck;
mod ops;
mod tensor;

pub use gradcheck::{finite_diff_check, random_projection, GradCheckReport};
pub use ops::{
    add, add_bias, bilinear_sample, concat_cols, concat_rows, layernorm, linear, matmul, maxpool2d,
    mul, mul_gate, relu, reshape, resize_bilinear, scale, sigmoid, slice_cols, slice_rows, softmax,
    sum_all,
};
pub use tensor::{Dtype, Tensor, TensorError};
