//! Reverse-mode MLP machinery: dense layers with ReLU, MSE, weight
//! initialisers, Adam, and a binary checkpoint format.

mod adam;
mod checkpoint;
mod init;
mod loss;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use init::{init_weights, Init};
pub use loss::mse;
pub use mlp::{Linear, Mlp, MlpCache};

use crate::linalg::Matrix;

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.rows() * self.value.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
