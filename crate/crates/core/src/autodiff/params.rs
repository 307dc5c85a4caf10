use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tape, Tensor, Var};

pub const CHECKPOINT_FORMAT: &str = "lanetraj-params-v1";

/// Named parameters in registration order. That order is the checkpoint
/// order and the order of gradients handed to the optimizer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// JSON checkpoint: `{"format": "...", "params": [{"name", "shape", "data"}, ...]}`
/// with `data` flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub params: Vec<NamedArray>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its index.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Places every parameter on `tape` as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Places every parameter on `tape` without gradient tracking.
    pub fn bind_constants<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            params: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(n, t)| NamedArray {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Overwrites values from a checkpoint; names, order and shapes must match.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<(), AutodiffError> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(AutodiffError::Checkpoint(format!("unknown format '{}'", ckpt.format)));
        }
        if ckpt.params.len() != self.tensors.len() {
            return Err(AutodiffError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.tensors.len(),
                ckpt.params.len()
            )));
        }
        for (i, arr) in ckpt.params.iter().enumerate() {
            if arr.name != self.names[i] {
                return Err(AutodiffError::Checkpoint(format!(
                    "parameter {i}: expected '{}', found '{}'",
                    self.names[i], arr.name
                )));
            }
            if arr.shape != self.tensors[i].shape() {
                return Err(AutodiffError::Checkpoint(format!(
                    "parameter '{}': shape {:?} vs {:?}",
                    arr.name,
                    arr.shape,
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = Tensor::new(&arr.shape, arr.data.clone())?;
        }
        Ok(())
    }
}
