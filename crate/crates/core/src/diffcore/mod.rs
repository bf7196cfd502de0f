//! Dense tensors and the handful of differentiable kernels the aggregation
//! and selection blocks are built from. Each kernel has a forward function
//! and a matching `*_vjp` (vector-Jacobian product).

pub mod gradcheck;
pub mod kernels;
mod param;
mod tensor;

pub use gradcheck::{check_scalar_fn, vjp_check, Differentiable, GradCheckOptions, GradCheckReport};
pub use kernels::{
    leaky_relu, leaky_relu_vjp, masked_softmax, masked_softmax_vjp, matmul, matmul_vjp, sigmoid,
    sigmoid_vjp, DEFAULT_LEAKY_SLOPE,
};
pub use param::Parameter;
pub use tensor::Tensor;
