//! Dense layers, tanh/identity activations, exact backpropagation and Adam.

mod adam;
mod dense;

pub use adam::{AdamConfig, AdamState};
pub use dense::{Activation, DenseLayer, ForwardCache, LayerGrad, Mlp, MlpGrad};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("backward called without a matching forward pass")]
    MissingForwardState,
    #[error("parameter/gradient shapes disagree at tensor {index}")]
    ShapeMismatch { index: usize },
    #[error("non-finite parameter in layer {0}")]
    NonFinite(usize),
}

/// Flat view over the trainable tensors of a model, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn shapes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    fn parameter_count(&self) -> usize {
        self.shapes().iter().sum()
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), NnError> {
    if expected == found {
        Ok(())
    } else {
        Err(NnError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
