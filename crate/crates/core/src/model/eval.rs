use super::KaeModel;
use crate::data::{Dataset, Split};
use crate::error::{KaeError, Result};
use crate::nn::mse;

/// Test error per prediction horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonReport {
    /// `errors[ℓ-1]` is the mean MSE at horizon `ℓ`.
    pub errors: Vec<f64>,
    /// `Σ_ℓ e_ℓ`.
    pub cumulative: f64,
}

/// Mean prediction MSE at horizons `1..=max_horizon` over every window of
/// `split`.
///
/// Every window holds the same number of states, so the mean of per-window
/// MSEs equals the MSE over the stacked windows.
pub fn evaluate_horizons(model: &KaeModel, data: &Dataset, split: Split, max_horizon: usize) -> Result<HorizonReport> {
    if max_horizon == 0 {
        return Err(KaeError::Parameter("maximum horizon must be at least 1".into()));
    }
    let windows = data.windows(split, max_horizon);
    if windows.is_empty() {
        return Err(KaeError::Dimension(format!(
            "no {split:?} windows of length {}; trajectories are too short",
            max_horizon + 1
        )));
    }
    let idx: Vec<usize> = (0..windows.len()).collect();
    let mut errors = vec![0.0; max_horizon];
    for sel in idx.chunks(2048) {
        let batch = windows.batch(data, sel);
        let out = model.forward(&batch[0], max_horizon)?;
        for (l, pred) in out.predictions.iter().enumerate() {
            errors[l] += mse(pred, &batch[l + 1])?.0 * sel.len() as f64;
        }
    }
    errors.iter_mut().for_each(|e| *e /= windows.len() as f64);
    let cumulative = errors.iter().sum();
    Ok(HorizonReport { errors, cumulative })
}
