//! Dense double-precision tensors and a reverse-mode differentiation graph.
//!
//! A [`Graph`] records every operation applied to its variables; calling
//! [`Graph::backward`] on a scalar result walks the record once in reverse
//! and returns the gradient of that scalar with respect to every variable.
//! Expensive model-specific pieces (recurrent cells, the CRF partition
//! function) plug in through [`CustomOp`] with hand-derived backward rules.

mod graph;
pub mod kernels;
mod tensor;

pub use graph::{CustomOp, ElementwiseKind, Gradients, Graph, Var};
pub use tensor::{broadcast_shape, Tensor};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("shape {shape:?} holds {} values but {values} were given", shape.iter().product::<usize>())]
    ValueCount { shape: Vec<usize>, values: usize },
    #[error("shape {shape:?} has a zero dimension")]
    ZeroDimension { shape: Vec<usize> },
    #[error("rows have different lengths")]
    Ragged,
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
    #[error("backward requires a scalar root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
}

/// Gaussian error-function GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Derivative of [`gelu`]: `Phi(x) + x * phi(x)`.
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted `log(sum(exp(x)))`.
pub fn logsumexp(values: &[f64]) -> Result<f64, TensorError> {
    let max = values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Err(TensorError::Empty { op: "logsumexp" });
    }
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    Ok(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}
