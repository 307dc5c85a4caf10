//! Minimal reverse-mode automatic differentiation.
//!
//! Dense `f64` tensors of rank at most 3, a single-use [`Tape`], an Adam
//! optimizer and a named parameter store with a JSON checkpoint format.
//! Broadcasting is limited to array-times-scalar ([`Var::mul_scalar`]);
//! everything else requires matching shapes.

mod adam;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use params::{Checkpoint, ParamStore, CHECKPOINT_FORMAT};
pub use tape::{concat, sum_all, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("unsupported rank for shape {0:?}")]
    Rank(Vec<usize>),
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("axis {axis} out of range for shape {shape:?}")]
    Axis { axis: usize, shape: Vec<usize> },
    #[error("index {index} out of range for shape {shape:?}")]
    Index { index: usize, shape: Vec<usize> },
    #[error("group norm: {channels} channels not divisible into {groups} groups")]
    Groups { channels: usize, groups: usize },
    #[error("{0}: empty input list")]
    Empty(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("parameter '{0}' not found")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
