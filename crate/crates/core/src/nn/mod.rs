//! Explicit forward/backward neural layers, Adam, and checkpoint encoding.
//!
//! There is no autodiff graph. Every layer caches what its backward pass
//! needs during `forward`; `backward` consumes that cache, accumulates
//! parameter gradients and returns the input gradient. Layers are generic
//! over [`Scalar`] so the same code runs in `f32` for agents and in `f64`
//! for finite-difference checks.

mod adam;
pub mod checkpoint;
mod layers;
mod network;
mod ops;
mod scalar;

pub use adam::{Adam, AdamConfig};
pub use layers::{Conv2d, Dense, Layer};
pub use network::{LayerSpec, NetworkSpec, Param, Sequential};
pub use ops::{dot, entropy_from_logits, log_softmax, softmax};
pub use scalar::Scalar;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("input {input:?} too small for kernel {kernel:?}")]
    KernelTooLarge { input: Vec<usize>, kernel: Vec<usize> },
    #[error("backward called without a cached forward pass")]
    NoCachedForward,
    #[error("parameter {0} missing from checkpoint")]
    MissingParam(String),
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch {
                expected: shape,
                got: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::ZERO; n],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}
