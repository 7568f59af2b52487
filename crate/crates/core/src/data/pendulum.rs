use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{Dataset, Trajectory};
use crate::error::{KaeError, Result};
use crate::linalg::Matrix;

/// Driven frictionless pendulum `ẍ + ω₀² x = f₀ sin(ω t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    pub omega0: f64,
    pub forcing_amplitude: f64,
    pub forcing_frequency: f64,
    pub dt: f64,
    /// States per trajectory, including the initial one.
    pub steps: usize,
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            omega0: 3.13,
            forcing_amplitude: 1.0,
            forcing_frequency: 1.0,
            dt: 0.02,
            steps: 600,
            x_range: (-PI, PI),
            v_range: (-1.0, 1.0),
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(KaeError::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps < 2 {
            return Err(KaeError::Parameter(format!("steps must be >= 2, got {}", self.steps)));
        }
        for (name, (lo, hi)) in [("x_range", self.x_range), ("v_range", self.v_range)] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(KaeError::Parameter(format!("{name} ({lo}, {hi}) is not a valid interval")));
            }
        }
        Ok(())
    }

    /// `(ẋ, v̇)` at time `t`.
    pub fn derivative(&self, t: f64, state: &[f64]) -> [f64; 2] {
        let (x, v) = (state[0], state[1]);
        [v, -self.omega0 * self.omega0 * x + self.forcing_amplitude * (self.forcing_frequency * t).sin()]
    }

    /// Integrates one trajectory from `(x0, v0)` at `t = 0`.
    pub fn integrate(&self, x0: f64, v0: f64) -> Result<Matrix> {
        self.validate()?;
        let mut data = Vec::with_capacity(self.steps * 2);
        let mut state = vec![x0, v0];
        data.extend_from_slice(&state);
        for k in 1..self.steps {
            let t = (k - 1) as f64 * self.dt;
            state = rk4_step(|t, s| self.derivative(t, s).to_vec(), t, &state, self.dt);
            data.extend_from_slice(&state);
        }
        Matrix::from_vec(self.steps, 2, data)
    }
}

/// One classic fourth-order Runge–Kutta step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(f: F, t: f64, y: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let shift = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> { base.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = f(t, y);
    let k2 = f(t + h / 2.0, &shift(y, &k1, h / 2.0));
    let k3 = f(t + h / 2.0, &shift(y, &k2, h / 2.0));
    let k4 = f(t + h, &shift(y, &k3, h));
    y.iter()
        .enumerate()
        .map(|(i, yi)| yi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// `n_traj` pendulum trajectories of the raw state `(x, ẋ)` with initial
/// conditions drawn uniformly from the configured ranges.
pub fn simulate_pendulum<R: Rng + ?Sized>(params: &PendulumParams, n_traj: usize, rng: &mut R) -> Result<Dataset> {
    params.validate()?;
    let xs = Uniform::new_inclusive(params.x_range.0, params.x_range.1).expect("validated range");
    let vs = Uniform::new_inclusive(params.v_range.0, params.v_range.1).expect("validated range");
    let trajectories = (0..n_traj)
        .map(|_| {
            let x0 = xs.sample(rng);
            let v0 = vs.sample(rng);
            Trajectory::new(params.integrate(x0, v0)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let metadata = BTreeMap::from([
        ("generator".to_string(), "pendulum".to_string()),
        ("omega0".to_string(), params.omega0.to_string()),
        ("forcing_amplitude".to_string(), params.forcing_amplitude.to_string()),
        ("forcing_frequency".to_string(), params.forcing_frequency.to_string()),
        ("steps".to_string(), params.steps.to_string()),
    ]);
    Dataset::new(params.dt, trajectories, metadata)
}
