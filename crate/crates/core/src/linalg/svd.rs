//! Thin singular value decomposition by one-sided Jacobi rotations.

use super::matrix::{dot, Matrix};
use crate::error::{KaeError, Result};

const MAX_SWEEPS: usize = 60;

/// Rank-`r` truncated SVD: `X ≈ left · diag(values) · rightᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × r`, orthonormal columns.
    pub left: Matrix,
    /// Descending, non-negative.
    pub values: Vec<f64>,
    /// `cols × r`, orthonormal columns.
    pub right: Matrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.left.clone();
        for i in 0..scaled.rows() {
            for (j, s) in self.values.iter().enumerate() {
                scaled[(i, j)] *= s;
            }
        }
        scaled.matmul_transposed(&self.right).expect("consistent factor shapes")
    }
}

/// Truncated SVD keeping the `rank` largest singular triplets.
pub fn svd(x: &Matrix, rank: usize) -> Result<Svd> {
    let (m, n) = x.shape();
    let k = m.min(n);
    if rank == 0 || rank > k {
        return Err(KaeError::Dimension(format!(
            "rank {rank} out of range 1..={k} for a {m}x{n} matrix"
        )));
    }
    // Work on the orientation with at least as many rows as columns.
    let transposed = m < n;
    let a = if transposed { x.transpose() } else { x.clone() };
    let full = jacobi_tall(&a);
    let (left, right) = if transposed { (full.right, full.left) } else { (full.left, full.right) };
    Ok(Svd {
        left: take_columns(&left, rank),
        values: full.values[..rank].to_vec(),
        right: take_columns(&right, rank),
    })
}

fn take_columns(m: &Matrix, r: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), r);
    for i in 0..m.rows() {
        out.row_mut(i).copy_from_slice(&m.row(i)[..r]);
    }
    out
}

/// One-sided Jacobi on a tall `m × n` matrix (`m ≥ n`).
fn jacobi_tall(a: &Matrix) -> Svd {
    let (m, n) = a.shape();
    // Columns stored contiguously for the rotations.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let tol = f64::EPSILON * (m as f64);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> =
        cols.iter().map(|c| dot(c, c).sqrt()).enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut left = Matrix::zeros(m, n);
    let mut right = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (out_j, &(j, sigma)) in order.iter().enumerate() {
        values.push(sigma);
        for i in 0..n {
            right[(i, out_j)] = v[j][i];
        }
        if sigma > 0.0 {
            for i in 0..m {
                left[(i, out_j)] = cols[j][i] / sigma;
            }
        }
    }
    complete_basis(&mut left, &values);
    Svd { left, values, right }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Replaces left vectors of zero singular values with orthonormal fill-ins.
fn complete_basis(left: &mut Matrix, values: &[f64]) {
    let (m, n) = left.shape();
    for j in 0..n {
        if values[j] > 0.0 {
            continue;
        }
        for candidate in 0..m {
            let mut e: Vec<f64> = (0..m).map(|i| if i == candidate { 1.0 } else { 0.0 }).collect();
            for k in 0..n {
                if k == j || (values[k] == 0.0 && k > j) {
                    continue;
                }
                let col = left.column(k);
                let proj = dot(&col, &e);
                e.iter_mut().zip(&col).for_each(|(x, c)| *x -= proj * c);
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 0.5 {
                for i in 0..m {
                    left[(i, j)] = e[i] / norm;
                }
                break;
            }
        }
    }
}
