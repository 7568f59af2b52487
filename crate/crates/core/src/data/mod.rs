//! Trajectory datasets: synthetic generators, splitting and standardisation,
//! window enumeration, and the `KDS1` file format.

mod io;
mod linear;
mod pendulum;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use io::{read_dataset, read_dataset_file, write_dataset, write_dataset_file, DATASET_MAGIC, DATASET_VERSION};
pub use linear::{gen_linear_dataset, random_orthogonal, LinearSystem};
pub use pendulum::{rk4_step, simulate_pendulum, PendulumParams};

use crate::error::{KaeError, Result};
use crate::linalg::Matrix;

/// Time-ordered states of one trajectory, one state per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Matrix,
}

impl Trajectory {
    pub fn new(states: Matrix) -> Result<Self> {
        if states.rows() < 2 {
            return Err(KaeError::Parameter(format!("trajectory needs at least 2 states, got {}", states.rows())));
        }
        if !states.is_finite() {
            return Err(KaeError::Parameter("trajectory contains non-finite states".into()));
        }
        Ok(Self { states })
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
            Split::Unassigned => 255,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            255 => Some(Split::Unassigned),
            _ => None,
        }
    }
}

/// Per-feature statistics of the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features with zero spread; these are left untouched.
    pub constant: Vec<bool>,
}

impl Standardization {
    pub fn transform(&self, states: &Matrix) -> Matrix {
        self.map(states, |x, mean, std| (x - mean) / std)
    }

    pub fn inverse(&self, states: &Matrix) -> Matrix {
        self.map(states, |x, mean, std| x * std + mean)
    }

    fn map(&self, states: &Matrix, f: impl Fn(f64, f64, f64) -> f64) -> Matrix {
        let mut out = states.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                if !self.constant[j] {
                    *v = f(*v, self.mean[j], self.std[j]);
                }
            }
        }
        out
    }
}

/// Trajectories with split assignment and optional standardisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dt: f64,
    pub trajectories: Vec<Trajectory>,
    pub splits: Vec<Split>,
    pub stats: Option<Standardization>,
    /// Generator name and parameters.
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    pub fn new(dt: f64, trajectories: Vec<Trajectory>, metadata: BTreeMap<String, String>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(KaeError::Parameter(format!("dt must be positive, got {dt}")));
        }
        if let Some(first) = trajectories.first() {
            if trajectories.iter().any(|t| t.dim() != first.dim()) {
                return Err(KaeError::Dimension("trajectories have different state dimensions".into()));
            }
        }
        let splits = vec![Split::Unassigned; trajectories.len()];
        Ok(Self { dt, trajectories, splits, stats: None, metadata })
    }

    pub fn dim(&self) -> usize {
        self.trajectories.first().map_or(0, Trajectory::dim)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Windows of `horizon + 1` consecutive states, stride 1, within each
    /// trajectory of `split`.
    pub fn windows(&self, split: Split, horizon: usize) -> Windows {
        let mut starts = Vec::new();
        for t in self.indices(split) {
            let len = self.trajectories[t].len();
            if len > horizon {
                starts.extend((0..len - horizon).map(|s| (t, s)));
            }
        }
        Windows { horizon, starts }
    }

    /// Every state of `split` stacked into one matrix.
    pub fn stacked(&self, split: Split) -> Matrix {
        let idx = self.indices(split);
        let rows: usize = idx.iter().map(|&i| self.trajectories[i].len()).sum();
        let mut data = Vec::with_capacity(rows * self.dim());
        for i in idx {
            data.extend_from_slice(self.trajectories[i].states.as_slice());
        }
        Matrix::from_vec(rows, self.dim(), data).expect("finite trajectories")
    }

    /// Assigns contiguous train/val/test blocks by the given fractions, in
    /// generation order.
    pub fn assign_splits(&self, fractions: (f64, f64, f64)) -> Result<Dataset> {
        let (tr, va, te) = fractions;
        if !(tr > 0.0 && va > 0.0 && te > 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
            return Err(KaeError::Parameter(format!(
                "split fractions must be positive and sum to 1, got {fractions:?}"
            )));
        }
        let n = self.len();
        let n_train = (tr * n as f64).round() as usize;
        let n_val = (va * n as f64).round() as usize;
        if n_train == 0 || n_val == 0 || n_train + n_val >= n {
            return Err(KaeError::Parameter(format!(
                "{n} trajectories cannot fill every split with fractions {fractions:?}"
            )));
        }
        let mut out = self.clone();
        out.splits = (0..n)
            .map(|i| {
                if i < n_train {
                    Split::Train
                } else if i < n_train + n_val {
                    Split::Val
                } else {
                    Split::Test
                }
            })
            .collect();
        Ok(out)
    }

    /// [`Dataset::assign_splits`], then standardises every split with
    /// training statistics.
    pub fn standardize_split(&self, fractions: (f64, f64, f64)) -> Result<Dataset> {
        let mut out = self.assign_splits(fractions)?;
        let train = out.stacked(Split::Train);
        let m = self.dim();
        let count = train.rows() as f64;
        let mut mean = vec![0.0; m];
        for i in 0..train.rows() {
            mean.iter_mut().zip(train.row(i)).for_each(|(a, x)| *a += x);
        }
        mean.iter_mut().for_each(|a| *a /= count);
        let mut var = vec![0.0; m];
        for i in 0..train.rows() {
            for (j, x) in train.row(i).iter().enumerate() {
                var[j] += (x - mean[j]).powi(2);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / count).sqrt()).collect();
        let constant = std
            .iter()
            .zip(&mean)
            .map(|(&s, &mu)| s <= 1e-12 * mu.abs().max(1.0))
            .collect();
        let stats = Standardization { mean, std, constant };
        for t in &mut out.trajectories {
            t.states = stats.transform(&t.states);
        }
        out.stats = Some(stats);
        Ok(out)
    }

    /// Undo standardisation, returning raw-scale trajectories.
    pub fn inverse_transform(&self) -> Dataset {
        let mut out = self.clone();
        if let Some(stats) = &self.stats {
            for t in &mut out.trajectories {
                t.states = stats.inverse(&t.states);
            }
        }
        out.stats = None;
        out
    }
}

/// Window start positions `(trajectory, first index)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Windows {
    pub horizon: usize,
    pub starts: Vec<(usize, usize)>,
}

impl Windows {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// For the selected windows, one `batch × dim` matrix per time offset
    /// `0..=horizon`.
    pub fn batch(&self, data: &Dataset, selection: &[usize]) -> Vec<Matrix> {
        let m = data.dim();
        (0..=self.horizon)
            .map(|offset| {
                let mut rows = Vec::with_capacity(selection.len() * m);
                for &w in selection {
                    let (t, s) = self.starts[w];
                    rows.extend_from_slice(data.trajectories[t].states.row(s + offset));
                }
                Matrix::from_vec(selection.len(), m, rows).expect("finite states")
            })
            .collect()
    }

    pub fn all(&self, data: &Dataset) -> Vec<Matrix> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(data, &all)
    }
}
