//! Exact dynamic mode decomposition and the slab-probability estimate
//! derived from its spectrum.

use num_complex::Complex64;

use crate::data::{Dataset, Split};
use crate::error::{KaeError, Result};
use crate::linalg::{eigenvalues, svd, Matrix, TOLERANCES};

/// Eigenvalues within this distance of the unit circle count as conserved.
pub const UNIT_MODULUS_TOL: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct DmdResult {
    /// Reduced operator `Ã = Uᵣᵀ Y Vᵣ Σᵣ⁻¹`, `r × r`.
    pub operator: Matrix,
    pub eigenvalues: Vec<Complex64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl DmdResult {
    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.norm()).collect()
    }
}

/// Exact DMD on one trajectory with snapshots as rows (`time × dim`).
pub fn exact_dmd(snapshots: &Matrix, rank: usize) -> Result<DmdResult> {
    let m = snapshots.rows();
    if m < 2 {
        return Err(KaeError::Dimension(format!("DMD needs at least 2 snapshots, got {m}")));
    }
    let dim = snapshots.cols();
    let before = Matrix::from_vec(m - 1, dim, snapshots.as_slice()[..(m - 1) * dim].to_vec())?;
    let after = Matrix::from_vec(m - 1, dim, snapshots.as_slice()[dim..].to_vec())?;
    dmd_from_pairs(&before, &after, rank)
}

/// Exact DMD from paired snapshots: row `k` of `after` follows row `k` of
/// `before` by one step.
pub fn dmd_from_pairs(before: &Matrix, after: &Matrix, rank: usize) -> Result<DmdResult> {
    if before.shape() != after.shape() {
        return Err(KaeError::Dimension(format!(
            "snapshot blocks have shapes {:?} and {:?}",
            before.shape(),
            after.shape()
        )));
    }
    let (pairs, dim) = before.shape();
    if rank == 0 || rank > dim.min(pairs) {
        return Err(KaeError::Dimension(format!(
            "rank {rank} out of range 1..={} for {pairs} snapshot pairs of dimension {dim}",
            dim.min(pairs)
        )));
    }
    // Column-snapshot matrices X, Y are dim × pairs.
    let x = before.transpose();
    let y = after.transpose();
    let s = svd(&x, rank)?;
    let sigma_max = s.values[0];
    if let Some((index, &value)) =
        s.values.iter().enumerate().find(|(_, &v)| !(v > TOLERANCES.rank_cutoff * sigma_max))
    {
        return Err(KaeError::RankDeficient { index, value });
    }
    // Ã = Uᵀ Y V Σ⁻¹
    let mut yv = y.matmul(&s.right)?;
    for i in 0..yv.rows() {
        for (j, sv) in s.values.iter().enumerate() {
            yv[(i, j)] /= sv;
        }
    }
    let operator = s.left.transpose_matmul(&yv)?;
    let eigenvalues = eigenvalues(&operator)?;
    Ok(DmdResult { operator, eigenvalues, singular_values: s.values, rank })
}

/// Exact DMD over every consecutive pair of states in the selected
/// trajectories (all of them when `split` is `None`).
pub fn dmd_dataset(data: &Dataset, split: Option<Split>, rank: usize) -> Result<DmdResult> {
    let dim = data.dim();
    let mut before = Vec::new();
    let mut after = Vec::new();
    for (t, s) in data.trajectories.iter().zip(&data.splits) {
        if split.is_some_and(|want| want != *s) {
            continue;
        }
        let v = t.states.as_slice();
        before.extend_from_slice(&v[..(t.len() - 1) * dim]);
        after.extend_from_slice(&v[dim..]);
    }
    let pairs = before.len() / dim.max(1);
    if pairs == 0 {
        return Err(KaeError::Dimension("no snapshot pairs selected".into()));
    }
    dmd_from_pairs(&Matrix::from_vec(pairs, dim, before)?, &Matrix::from_vec(pairs, dim, after)?, rank)
}

/// Slab probability estimate: the fraction of eigenvalues whose modulus is
/// NOT within `tol` of 1.
///
/// Under `θ·U(a, b) + (1 − θ)·δ(1)` unit-modulus eigenvalues come from the
/// spike with weight `1 − θ`, so the slab weight is the non-unit fraction.
pub fn estimate_theta(eigenvalues: &[Complex64], tol: f64) -> Result<f64> {
    if eigenvalues.is_empty() {
        return Err(KaeError::Parameter("cannot estimate theta from an empty spectrum".into()));
    }
    if !(tol > 0.0) {
        return Err(KaeError::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let unit = eigenvalues.iter().filter(|l| (l.norm() - 1.0).abs() < tol).count();
    Ok(1.0 - unit as f64 / eigenvalues.len() as f64)
}
