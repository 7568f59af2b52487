use std::io::Write;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KaeModel, KoopmanInit};
use crate::data::{Dataset, Split};
use crate::error::{KaeError, Result};
use crate::linalg::{eigenvalues, Matrix};
use crate::nn::{AdamConfig, AdamState, Parameter};
use crate::spectral::Eigenloss;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Prediction steps in the loss.
    pub horizon: usize,
    /// Eigenloss weight `ε_λ`.
    pub eigenloss: f64,
    pub koopman_init: KoopmanInit,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// When false only the Koopman matrix is updated.
    pub train_autoencoder: bool,
    /// Abort once the epoch training loss exceeds this multiple of the
    /// first batch loss.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 8,
            eigenloss: 0.0,
            koopman_init: KoopmanInit::Gaussian { sigma: None },
            epochs: 30,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
            train_autoencoder: true,
            divergence_factor: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(KaeError::Parameter("horizon must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(KaeError::Parameter("batch size must be at least 1".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(KaeError::Parameter(format!(
                "divergence factor must exceed 1, got {}",
                self.divergence_factor
            )));
        }
        Eigenloss::new(self.eigenloss).validate()?;
        self.adam.validate()
    }
}

/// Metrics of one training epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total loss over the epoch's mini-batches, eigenloss included.
    pub train_loss: f64,
    /// Reconstruction plus averaged prediction loss on validation windows.
    pub val_loss: f64,
    /// Weighted eigenloss of `U` at the end of the epoch.
    pub eigenloss_term: f64,
    pub wall_ms: f64,
    /// Eigenvalue moduli of `U` at the end of the epoch, descending.
    pub moduli: Vec<f64>,
    /// `U` at the end of the epoch.
    pub koopman: Matrix,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// `epoch,train_loss,val_loss,eigenloss_term[,wall_ms],lambda_0,…`.
    ///
    /// Without timing the output is a pure function of the run's inputs.
    pub fn write_csv<W: Write>(&self, mut out: W, with_timing: bool) -> Result<()> {
        let n = self.epochs.first().map_or(0, |e| e.moduli.len());
        write!(out, "epoch,train_loss,val_loss,eigenloss_term")?;
        if with_timing {
            write!(out, ",wall_ms")?;
        }
        for j in 0..n {
            write!(out, ",lambda_{j}")?;
        }
        writeln!(out)?;
        for e in &self.epochs {
            write!(out, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.eigenloss_term)?;
            if with_timing {
                write!(out, ",{}", e.wall_ms)?;
            }
            for m in &e.moduli {
                write!(out, ",{m}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Validation loss over every window of `split`, without the eigenloss term.
pub fn split_loss(model: &KaeModel, data: &Dataset, split: Split, horizon: usize) -> Result<f64> {
    let windows = data.windows(split, horizon);
    if windows.is_empty() {
        return Err(KaeError::Dimension(format!("no {split:?} windows of length {}", horizon + 1)));
    }
    let none = Eigenloss::new(0.0);
    let idx: Vec<usize> = (0..windows.len()).collect();
    let mut total = 0.0;
    for sel in idx.chunks(4096) {
        let batch = windows.batch(data, sel);
        total += model.evaluate(&batch, &none)?.data_loss() * sel.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

fn sorted_moduli(u: &Matrix) -> Result<Vec<f64>> {
    Ok(eigenvalues(u)?.iter().map(|l| l.norm()).collect())
}

/// Shuffled mini-batch Adam on the total loss over the training windows.
pub fn train(model: &mut KaeModel, data: &Dataset, config: &TrainConfig) -> Result<TrainLog> {
    config.validate()?;
    if data.dim() != model.state_dim() {
        return Err(KaeError::Dimension(format!(
            "dataset dimension {} differs from model input {}",
            data.dim(),
            model.state_dim()
        )));
    }
    let mut log = TrainLog::default();
    if config.epochs == 0 {
        return Ok(log);
    }
    let train_windows = data.windows(Split::Train, config.horizon);
    if train_windows.is_empty() {
        return Err(KaeError::Dimension(format!("no training windows of length {}", config.horizon + 1)));
    }
    // Fail early rather than after the first epoch.
    if data.windows(Split::Val, config.horizon).is_empty() {
        return Err(KaeError::Dimension(format!("no validation windows of length {}", config.horizon + 1)));
    }

    let eigenloss = Eigenloss::new(config.eigenloss);
    let mut adam = AdamState::new(config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut initial: Option<f64> = None;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for sel in order.chunks(config.batch_size) {
            let window = train_windows.batch(data, sel);
            model.zero_grad();
            let loss = model.total_loss(&window, &eigenloss)?.total();
            let reference = *initial.get_or_insert(loss);
            if !loss.is_finite() || loss > config.divergence_factor * reference.max(f64::MIN_POSITIVE) {
                return Err(KaeError::Divergence { epoch, loss, limit: config.divergence_factor * reference });
            }
            let mut params: Vec<&mut Parameter> =
                if config.train_autoencoder { model.parameters_mut() } else { vec![&mut model.koopman] };
            adam.step(&mut params)?;
            sum += loss;
            batches += 1;
        }
        let train_loss = sum / batches as f64;
        let val_loss = split_loss(model, data, Split::Val, config.horizon)?;
        let (eigenloss_term, _) = eigenloss.term(&model.koopman.value)?;
        let moduli = sorted_moduli(&model.koopman.value)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e} eig {eigenloss_term:.3e}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            eigenloss_term,
            wall_ms,
            moduli,
            koopman: model.koopman.value.clone(),
        });
    }
    if let Some(last) = log.epochs.last() {
        info!("trained {} epochs, final val loss {:.6e}", config.epochs, last.val_loss);
    }
    Ok(log)
}
