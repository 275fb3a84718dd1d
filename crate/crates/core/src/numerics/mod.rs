//! Deterministic numeric substrate: tensors, RNG, kernels, optimizer,
//! and the finite-difference checker used to validate every backward pass.

pub mod adam;
pub mod fd;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use adam::AdamState;
pub use fd::{fd_check, fd_check_at, FdReport};
pub use ops::{
    activate, activate_backward, conv2d, conv2d_backward, linear, linear_backward, Activation,
};
pub use rng::Rng;
pub use tensor::Tensor;
