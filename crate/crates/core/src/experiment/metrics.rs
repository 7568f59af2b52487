use crate::error::{KaeError, Result};

/// Settings of [`convergence_epoch`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Convergence {
    pub tau: f64,
    pub warmup: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Self { tau: 0.05, warmup: 5 }
    }
}

/// First 1-based epoch `e > warmup` whose validation change
/// `Δ_e = |val_e − val_{e−1}|` falls below `tau` times the largest
/// post-warmup change `max_{warmup < e' ≤ e} Δ_{e'}`, or `None` if that never
/// happens.
///
/// A post-warmup plateau (`0 / 0`) counts as converged.
pub fn convergence_epoch(val: &[f64], tau: f64, warmup: usize) -> Result<Option<usize>> {
    if val.len() < warmup + 2 {
        return Err(KaeError::Parameter(format!(
            "convergence needs at least {} epochs, got {}",
            warmup + 2,
            val.len()
        )));
    }
    if !(tau > 0.0) {
        return Err(KaeError::Parameter(format!("tau must be positive, got {tau}")));
    }
    let mut max_delta = 0.0f64;
    // Epoch e (1-based) is val[e - 1]; Δ_e exists from e = 2.
    for e in (warmup + 1).max(2)..=val.len() {
        let delta = (val[e - 1] - val[e - 2]).abs();
        max_delta = max_delta.max(delta);
        if max_delta == 0.0 || delta / max_delta < tau {
            return Ok(Some(e));
        }
    }
    Ok(None)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
