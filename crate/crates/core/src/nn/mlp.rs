use rand::Rng;

use super::init::{init_weights, Init};
use super::Parameter;
use crate::error::{KaeError, Result};
use crate::linalg::Matrix;

/// Affine layer `y = x Wᵀ + b` on row-major batches.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `out × in`.
    pub weight: Parameter,
    /// `1 × out`.
    pub bias: Parameter,
}

impl Linear {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(KaeError::Dimension(format!(
                "bias of length {} for {} outputs",
                bias.len(),
                weight.rows()
            )));
        }
        let bias = Matrix::from_vec(1, bias.len(), bias)?;
        Ok(Self { weight: Parameter::new(weight), bias: Parameter::new(bias) })
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, scheme: Init, rng: &mut R) -> Result<Self> {
        let weight = init_weights(outputs, inputs, scheme, rng)?;
        Self::new(weight, vec![0.0; outputs])
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.rows()
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul_transposed(&self.weight.value)?;
        let b = self.bias.value.row(0);
        for i in 0..y.rows() {
            y.row_mut(i).iter_mut().zip(b).for_each(|(v, bj)| *v += bj);
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, x: &Matrix, dy: &Matrix) -> Result<Matrix> {
        let dw = dy.transpose_matmul(x)?;
        self.weight.grad.axpy(1.0, &dw)?;
        let db = self.bias.grad.row_mut(0);
        for i in 0..dy.rows() {
            db.iter_mut().zip(dy.row(i)).for_each(|(g, d)| *g += d);
        }
        dy.matmul(&self.weight.value)
    }
}

/// Linear layers with ReLU between them; no activation after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    version: u64,
}

/// Activations recorded by [`Mlp::forward`] for the reverse pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input to each linear layer (post-activation of the previous one).
    inputs: Vec<Matrix>,
    /// Output of each linear layer before the activation.
    pre_activations: Vec<Matrix>,
    version: u64,
}

impl Mlp {
    /// Builds a network with the given layer widths, weights drawn with
    /// `scheme` and zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], scheme: Init, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(KaeError::Parameter("an MLP needs at least an input and an output width".into()));
        }
        let layers = widths
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], scheme, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, version: 0 })
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(KaeError::Parameter("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(KaeError::Dimension(format!(
                    "layer with {} outputs feeds layer with {} inputs",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    /// Single linear layer copying the first `min(inputs, outputs)`
    /// coordinates, zero elsewhere.
    pub fn identity(inputs: usize, outputs: usize) -> Self {
        let mut w = Matrix::zeros(outputs, inputs);
        for i in 0..inputs.min(outputs) {
            w[(i, i)] = 1.0;
        }
        let layer = Linear::new(w, vec![0.0; outputs]).expect("consistent shapes");
        Self { layers: vec![layer], version: 0 }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(Linear::outputs));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// Mutable access to every parameter; marks outstanding caches stale.
    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.weight.zero_grad();
            l.bias.zero_grad();
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.input_width() {
            return Err(KaeError::Dimension(format!(
                "input width {} does not match network input {}",
                x.cols(),
                self.input_width()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h)?;
            inputs.push(h);
            h = if i < last { relu(&z) } else { z.clone() };
            pre_activations.push(z);
        }
        Ok((h, MlpCache { inputs, pre_activations, version: self.version }))
    }

    /// Output only, without keeping a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    /// Reverse pass. Parameter gradients are added to whatever is already
    /// accumulated; returns the gradient with respect to the input batch.
    pub fn backward(&mut self, cache: &MlpCache, grad_output: &Matrix) -> Result<Matrix> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(KaeError::State("cache does not belong to the current parameters".into()));
        }
        let out = &cache.pre_activations[self.layers.len() - 1];
        if grad_output.shape() != out.shape() {
            return Err(KaeError::Dimension(format!(
                "output gradient shape {:?} does not match output {:?}",
                grad_output.shape(),
                out.shape()
            )));
        }
        let mut grad = grad_output.clone();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                relu_backward(&mut grad, &cache.pre_activations[i]);
            }
            grad = self.layers[i].backward(&cache.inputs[i], &grad)?;
        }
        Ok(grad)
    }
}

fn relu(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

fn relu_backward(grad: &mut Matrix, pre: &Matrix) {
    for (g, &z) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}
