//! Deterministic unsupervised domain adaptation for a toy lesion detector.
//!
//! The crate trains a small convolutional detector on a synthetic source
//! domain, then adapts it to a shifted target domain with a mean-teacher
//! loop: masked-autoencoder regularization with annealed mask ratio,
//! confidence-refined pseudo-labels, adversarial feature alignment, and
//! selective re-initialization. Everything — data synthesis, training,
//! evaluation — is bit-reproducible from a single seed.
//!
//! Numeric work is generic over [`scalar::Scalar`]; training uses `f32`
//! while gradient checking reruns the same code in `f64`.

pub mod error;
pub mod numerics;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f32` aliases used by the training path.
pub type Tensor32 = numerics::Tensor<f32>;
/// `f64` aliases used by finite-difference verification.
pub type Tensor64 = numerics::Tensor<f64>;
