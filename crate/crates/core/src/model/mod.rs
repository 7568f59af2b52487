//! Koopman autoencoder: encoder `ψ`, linear Koopman matrix `U` without
//! bias, decoder. Latent codes advance by repeated multiplication,
//! `ŷ_{k+ℓ} = U^ℓ ψ(x_k)`.

mod eval;
mod train;

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use eval::{evaluate_horizons, HorizonReport};
pub use train::{split_loss, train, EpochRecord, TrainConfig, TrainLog};

use crate::error::{KaeError, Result};
use crate::linalg::Matrix;
use crate::nn::{init_weights, mse, read_checkpoint, write_checkpoint, Init, Linear, Mlp, MlpCache, Parameter};
use crate::spectral::{eigeninit_random, Eigenloss, SpikeSlab};

/// How the Koopman matrix is initialised.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KoopmanInit {
    /// `N(0, σ²)`; `σ` defaults to `1/√n`.
    Gaussian { sigma: Option<f64> },
    Xavier,
    Eigeninit(SpikeSlab),
}

impl KoopmanInit {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Matrix> {
        match *self {
            KoopmanInit::Gaussian { sigma } => {
                let sigma = sigma.unwrap_or(1.0 / (n as f64).sqrt());
                init_weights(n, n, Init::Gaussian { sigma }, rng)
            }
            KoopmanInit::Xavier => init_weights(n, n, Init::Xavier, rng),
            KoopmanInit::Eigeninit(spec) => eigeninit_random(n, &spec, rng),
        }
    }
}

/// Layer widths of the encoder and decoder around the Koopman matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub state_dim: usize,
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { state_dim: 2, latent_dim: 8, hidden: vec![64, 32] }
    }
}

impl Architecture {
    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.state_dim];
        w.extend(&self.hidden);
        w.push(self.latent_dim);
        w
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = self.encoder_widths();
        w.reverse();
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KaeModel {
    pub encoder: Mlp,
    pub koopman: Parameter,
    pub decoder: Mlp,
}

/// Outputs of [`KaeModel::forward`].
#[derive(Clone, Debug)]
pub struct KaeOutput {
    /// `x̃_k = decoder(ψ(x_k))`.
    pub reconstruction: Matrix,
    /// `x̂_{k+ℓ}` for `ℓ = 1..=H`.
    pub predictions: Vec<Matrix>,
    /// `ŷ_{k+ℓ}` for `ℓ = 0..=H`, with `ŷ_k = ψ(x_k)`.
    pub latents: Vec<Matrix>,
}

/// Loss components of one evaluation of [`KaeModel::total_loss`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    /// Mean over `ℓ = 1..=H` of the prediction MSE.
    pub prediction: f64,
    /// Weighted eigenvalue penalty.
    pub eigenloss: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.prediction + self.eigenloss
    }

    /// Reconstruction plus prediction, the quantity compared across schemes.
    pub fn data_loss(&self) -> f64 {
        self.reconstruction + self.prediction
    }
}

impl KaeModel {
    pub fn new(encoder: Mlp, koopman: Matrix, decoder: Mlp) -> Result<Self> {
        let n = koopman.rows();
        if !koopman.is_square() {
            return Err(KaeError::Dimension(format!("Koopman matrix must be square, got {:?}", koopman.shape())));
        }
        if encoder.output_width() != n || decoder.input_width() != n {
            return Err(KaeError::Dimension(format!(
                "encoder output {} and decoder input {} must equal the Koopman size {n}",
                encoder.output_width(),
                decoder.input_width()
            )));
        }
        if encoder.input_width() != decoder.output_width() {
            return Err(KaeError::Dimension(format!(
                "encoder input {} differs from decoder output {}",
                encoder.input_width(),
                decoder.output_width()
            )));
        }
        Ok(Self { encoder, koopman: Parameter::new(koopman), decoder })
    }

    /// He-initialised encoder/decoder with the Koopman matrix drawn by `init`.
    ///
    /// The random stream is consumed encoder first, then decoder, then `U`,
    /// so two schemes on the same seed share encoder and decoder weights.
    pub fn build<R: Rng + ?Sized>(arch: &Architecture, init: &KoopmanInit, rng: &mut R) -> Result<Self> {
        if arch.state_dim == 0 || arch.latent_dim == 0 || arch.hidden.contains(&0) {
            return Err(KaeError::Parameter(format!("architecture has a zero width: {arch:?}")));
        }
        let encoder = Mlp::new(&arch.encoder_widths(), Init::He, rng)?;
        let decoder = Mlp::new(&arch.decoder_widths(), Init::He, rng)?;
        let koopman = init.sample(arch.latent_dim, rng)?;
        Self::new(encoder, koopman, decoder)
    }

    /// Linear identity encoder/decoder padding `m` states into `n ≥ m`
    /// latent coordinates.
    pub fn identity(state_dim: usize, koopman: Matrix) -> Result<Self> {
        let n = koopman.rows();
        Self::new(Mlp::identity(state_dim, n), koopman, Mlp::identity(n, state_dim))
    }

    pub fn state_dim(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn latent_dim(&self) -> usize {
        self.koopman.value.rows()
    }

    pub fn koopman_matrix(&self) -> &Matrix {
        &self.koopman.value
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.koopman.zero_grad();
        self.decoder.zero_grad();
    }

    /// Every parameter in a fixed order: encoder, Koopman matrix, decoder.
    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.encoder.parameters_mut();
        p.push(&mut self.koopman);
        p.extend(self.decoder.parameters_mut());
        p
    }

    pub fn named_parameters(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (prefix, net) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, layer) in net.layers().iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), &layer.weight.value));
                out.push((format!("{prefix}.{i}.bias"), &layer.bias.value));
            }
        }
        out.push(("koopman".to_string(), &self.koopman.value));
        out
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        write_checkpoint(out, &self.named_parameters())
    }

    /// Restores a model saved by [`KaeModel::save`].
    pub fn load<R: Read>(input: R) -> Result<Self> {
        let params = read_checkpoint(input)?;
        let find = |name: &str| params.iter().find(|(n, _)| n == name).map(|(_, m)| m.clone());
        let load_net = |prefix: &str| -> Result<Mlp> {
            let mut layers = Vec::new();
            while let (Some(w), Some(b)) =
                (find(&format!("{prefix}.{}.weight", layers.len())), find(&format!("{prefix}.{}.bias", layers.len())))
            {
                layers.push(Linear::new(w, b.into_vec())?);
            }
            Mlp::from_layers(layers)
        };
        let koopman = find("koopman").ok_or_else(|| KaeError::Format {
            offset: 0,
            message: "checkpoint has no \"koopman\" parameter".into(),
        })?;
        Self::new(load_net("encoder")?, koopman, load_net("decoder")?)
    }

    /// Latent codes `ψ(x)·(Uᵀ)^ℓ` for `ℓ = 0..=horizon` by repeated
    /// multiplication.
    fn roll_out(&self, y0: Matrix, horizon: usize) -> Result<Vec<Matrix>> {
        let mut latents = Vec::with_capacity(horizon + 1);
        latents.push(y0);
        for l in 0..horizon {
            let next = latents[l].matmul_transposed(&self.koopman.value)?;
            latents.push(next);
        }
        Ok(latents)
    }

    pub fn forward(&self, x: &Matrix, horizon: usize) -> Result<KaeOutput> {
        let y0 = self.encoder.predict(x)?;
        let latents = self.roll_out(y0, horizon)?;
        let decoded = self.decoder.predict(&vstack(&latents))?;
        let mut blocks = split_rows(&decoded, latents.len());
        let reconstruction = blocks.remove(0);
        Ok(KaeOutput { reconstruction, predictions: blocks, latents })
    }

    /// Loss terms without gradients; `window[ℓ]` holds the states at offset `ℓ`.
    pub fn evaluate(&self, window: &[Matrix], eigenloss: &Eigenloss) -> Result<LossBreakdown> {
        let horizon = check_window(window)?;
        let out = self.forward(&window[0], horizon)?;
        let reconstruction = mse(&out.reconstruction, &window[0])?.0;
        let mut prediction = 0.0;
        for (l, pred) in out.predictions.iter().enumerate() {
            prediction += mse(pred, &window[l + 1])?.0;
        }
        prediction /= horizon as f64;
        let eig = if eigenloss.weight > 0.0 {
            eigenloss.weight * crate::spectral::eigenloss_value(&self.koopman.value)?
        } else {
            0.0
        };
        Ok(LossBreakdown { reconstruction, prediction, eigenloss: eig })
    }

    /// `MSE(x_k, x̃_k) + (1/H) Σ_ℓ MSE(x_{k+ℓ}, x̂_{k+ℓ}) + ε_λ Σ_j (|λ_j| − 1)²`.
    ///
    /// Gradients of all three terms are added to the parameter gradients.
    pub fn total_loss(&mut self, window: &[Matrix], eigenloss: &Eigenloss) -> Result<LossBreakdown> {
        let horizon = check_window(window)?;
        let batch = window[0].rows();

        let (y0, enc_cache) = self.encoder.forward(&window[0])?;
        let latents = self.roll_out(y0, horizon)?;
        let stacked = vstack(&latents);
        let (decoded, dec_cache): (Matrix, MlpCache) = self.decoder.forward(&stacked)?;
        let blocks = split_rows(&decoded, horizon + 1);

        let mut grad_blocks = Vec::with_capacity(horizon + 1);
        let (reconstruction, g) = mse(&blocks[0], &window[0])?;
        grad_blocks.push(g);
        let mut prediction = 0.0;
        for l in 1..=horizon {
            let (v, g) = mse(&blocks[l], &window[l])?;
            prediction += v;
            grad_blocks.push(g.scale(1.0 / horizon as f64));
        }
        prediction /= horizon as f64;

        let d_latent = self.decoder.backward(&dec_cache, &vstack(&grad_blocks))?;
        let d_blocks = split_rows(&d_latent, horizon + 1);

        // y_ℓ = y_{ℓ-1} Uᵀ: dU += g_ℓᵀ y_{ℓ-1}, g_{ℓ-1} += g_ℓ U.
        let mut g = d_blocks[horizon].clone();
        for l in (1..=horizon).rev() {
            let du = g.transpose_matmul(&latents[l - 1])?;
            self.koopman.grad.axpy(1.0, &du)?;
            let back = g.matmul(&self.koopman.value)?;
            g = d_blocks[l - 1].add(&back)?;
        }
        debug_assert_eq!(g.rows(), batch);
        self.encoder.backward(&enc_cache, &g)?;

        let (eig, eig_grad) = eigenloss.term(&self.koopman.value)?;
        if eigenloss.weight > 0.0 {
            self.koopman.grad.axpy(1.0, &eig_grad)?;
        }
        Ok(LossBreakdown { reconstruction, prediction, eigenloss: eig })
    }
}

fn check_window(window: &[Matrix]) -> Result<usize> {
    if window.len() < 2 {
        return Err(KaeError::Dimension(format!(
            "a loss window needs at least 2 time offsets, got {}",
            window.len()
        )));
    }
    let shape = window[0].shape();
    if window.iter().any(|w| w.shape() != shape) {
        return Err(KaeError::Dimension("window offsets have inconsistent shapes".into()));
    }
    Ok(window.len() - 1)
}

pub(crate) fn vstack(blocks: &[Matrix]) -> Matrix {
    let cols = blocks[0].cols();
    let rows = blocks.iter().map(Matrix::rows).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for b in blocks {
        data.extend_from_slice(b.as_slice());
    }
    Matrix::from_raw(rows, cols, data)
}

pub(crate) fn split_rows(m: &Matrix, parts: usize) -> Vec<Matrix> {
    let rows = m.rows() / parts;
    let cols = m.cols();
    m.as_slice()
        .chunks(rows * cols)
        .map(|chunk| Matrix::from_raw(rows, cols, chunk.to_vec()))
        .collect()
}
