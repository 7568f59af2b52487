//! Experiment orchestration: JSON configuration, per-seed training runs,
//! CSV artifacts, aggregation, convergence metric and spectrum reports.

mod metrics;
mod run;
mod spectrum;

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{convergence_epoch, mean_std, Convergence};
pub use run::{run_experiment, run_seed, ExperimentOutcome, SeedMetrics, SeedStatus};
pub use spectrum::{init_spectrum_report, InitScheme, SchemeSpectrum, SpectrumReport, BIN_COUNT, BIN_WIDTH};

use crate::data::{gen_linear_dataset, read_dataset_file, simulate_pendulum, Dataset, PendulumParams, Split};
use crate::dmd::{dmd_dataset, estimate_theta, UNIT_MODULUS_TOL};
use crate::error::{KaeError, Result};
use crate::model::{Architecture, KoopmanInit, TrainConfig};
use crate::nn::AdamConfig;
use crate::spectral::SpikeSlab;

/// Where the trajectories come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Forced pendulum, standardised with training statistics.
    Pendulum {
        trajectories: usize,
        #[serde(default)]
        params: PendulumParams,
    },
    /// `x_{k+1} = A x_k` with the given spectrum as `[re, im]` pairs; not
    /// standardised, so the generator stays linear.
    Linear { spectrum: Vec<[f64; 2]>, trajectories: usize, steps: usize },
    /// A `KDS1` file. Unassigned files are split and standardised.
    File { path: PathBuf },
}

/// Initialisation and regularisation of the Koopman matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    None,
    Xavier,
    Eigeninit,
    Eigenloss,
    Both,
}

impl Scheme {
    pub fn uses_eigeninit(self) -> bool {
        matches!(self, Scheme::Eigeninit | Scheme::Both)
    }

    pub fn uses_eigenloss(self) -> bool {
        matches!(self, Scheme::Eigenloss | Scheme::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Xavier => "xavier",
            Scheme::Eigeninit => "eigeninit",
            Scheme::Eigenloss => "eigenloss",
            Scheme::Both => "both",
        }
    }
}

/// Encoder/decoder shape; the input width comes from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self { latent_dim: 8, hidden: vec![64, 32] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    pub horizon: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for Training {
    fn default() -> Self {
        Self { horizon: 8, epochs: 30, batch_size: 128, adam: AdamConfig::default() }
    }
}

fn default_split() -> [f64; 3] {
    [0.7, 0.15, 0.15]
}

fn default_eval_horizon() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Train/validation/test fractions of the trajectories.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub model: ModelDims,
    #[serde(default)]
    pub training: Training,
    pub scheme: Scheme,
    /// Slab probability; required iff the scheme uses eigeninit.
    #[serde(default)]
    pub theta: Option<f64>,
    /// Slab interval `[a, b]`, default `[0, 1]`.
    #[serde(default)]
    pub slab: Option<[f64; 2]>,
    /// `ε_λ`; required iff the scheme uses eigenloss.
    #[serde(default)]
    pub eigenloss_weight: Option<f64>,
    pub seeds: Vec<u64>,
    /// Longest horizon of the test evaluation.
    #[serde(default = "default_eval_horizon")]
    pub eval_horizon: usize,
    #[serde(default)]
    pub convergence: Convergence,
    pub output_dir: PathBuf,
    /// Concurrent seeds; defaults to the available parallelism.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(KaeError::Parameter("seeds must not be empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(KaeError::Parameter("seeds must be distinct".into()));
        }
        match (self.scheme.uses_eigeninit(), self.theta) {
            (true, None) => {
                return Err(KaeError::Parameter(format!("scheme {} requires theta", self.scheme.as_str())))
            }
            (false, Some(_)) => {
                return Err(KaeError::Parameter(format!("scheme {} does not use theta", self.scheme.as_str())))
            }
            _ => {}
        }
        if self.slab.is_some() && !self.scheme.uses_eigeninit() {
            return Err(KaeError::Parameter(format!("scheme {} does not use a slab", self.scheme.as_str())));
        }
        match (self.scheme.uses_eigenloss(), self.eigenloss_weight) {
            (true, None) => {
                return Err(KaeError::Parameter(format!(
                    "scheme {} requires eigenloss_weight",
                    self.scheme.as_str()
                )))
            }
            (false, Some(_)) => {
                return Err(KaeError::Parameter(format!(
                    "scheme {} does not use eigenloss_weight",
                    self.scheme.as_str()
                )))
            }
            _ => {}
        }
        if self.eval_horizon == 0 {
            return Err(KaeError::Parameter("eval_horizon must be at least 1".into()));
        }
        if self.model.latent_dim == 0 || self.model.hidden.contains(&0) {
            return Err(KaeError::Parameter("model widths must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(KaeError::Parameter("threads must be at least 1".into()));
        }
        if let DatasetSpec::Pendulum { params, trajectories } = &self.dataset {
            params.validate()?;
            if *trajectories < 3 {
                return Err(KaeError::Parameter("pendulum needs at least 3 trajectories".into()));
            }
        }
        if let Some(spec) = self.spike_slab() {
            spec.validate()?;
        }
        self.train_config(0).validate()
    }

    pub fn spike_slab(&self) -> Option<SpikeSlab> {
        let theta = self.theta?;
        let [low, high] = self.slab.unwrap_or([0.0, 1.0]);
        Some(SpikeSlab::with_slab(theta, low, high))
    }

    pub fn koopman_init(&self) -> KoopmanInit {
        match (self.scheme, self.spike_slab()) {
            (Scheme::Xavier, _) => KoopmanInit::Xavier,
            (Scheme::Eigeninit | Scheme::Both, Some(spec)) => KoopmanInit::Eigeninit(spec),
            _ => KoopmanInit::Gaussian { sigma: None },
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            horizon: self.training.horizon,
            eigenloss: self.eigenloss_weight.unwrap_or(0.0),
            koopman_init: self.koopman_init(),
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            adam: self.training.adam,
            seed,
            train_autoencoder: true,
            divergence_factor: 1e6,
        }
    }

    pub fn architecture(&self, state_dim: usize) -> Architecture {
        Architecture { state_dim, latent_dim: self.model.latent_dim, hidden: self.model.hidden.clone() }
    }

    /// The dataset for `seed`; independent of the scheme.
    pub fn build_dataset(&self, seed: u64) -> Result<Dataset> {
        let mut rng = stream(seed, DATA_STREAM);
        let fractions = (self.split[0], self.split[1], self.split[2]);
        match &self.dataset {
            DatasetSpec::Pendulum { trajectories, params } => {
                simulate_pendulum(params, *trajectories, &mut rng)?.standardize_split(fractions)
            }
            DatasetSpec::Linear { spectrum, trajectories, steps } => {
                let spectrum: Vec<Complex64> = spectrum.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
                gen_linear_dataset(&spectrum, *trajectories, *steps, &mut rng)?.dataset.assign_splits(fractions)
            }
            DatasetSpec::File { path } => {
                let data = read_dataset_file(path)?;
                if data.splits.iter().all(|&s| s == Split::Unassigned) {
                    data.standardize_split(fractions)
                } else {
                    Ok(data)
                }
            }
        }
    }
}

pub(crate) const DATA_STREAM: u64 = 0;
pub(crate) const MODEL_STREAM: u64 = 1;

/// Independent ChaCha stream `stream_id` for `seed`.
pub(crate) fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// DMD-based slab probability for a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub moduli: Vec<f64>,
}

pub fn estimate_theta_file(path: impl AsRef<Path>, latent_dim: usize) -> Result<ThetaEstimate> {
    let data = read_dataset_file(path)?;
    estimate_theta_dataset(&data, latent_dim)
}

pub fn estimate_theta_dataset(data: &Dataset, latent_dim: usize) -> Result<ThetaEstimate> {
    let dmd = dmd_dataset(data, None, latent_dim)?;
    let theta = estimate_theta(&dmd.eigenvalues, UNIT_MODULUS_TOL)?;
    Ok(ThetaEstimate { theta, moduli: dmd.moduli() })
}
