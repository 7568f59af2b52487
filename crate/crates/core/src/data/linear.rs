use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Trajectory};
use crate::error::{KaeError, Result};
use crate::linalg::Matrix;

/// A generated linear system `x_{k+1} = A x_k` and its trajectories.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub dataset: Dataset,
    pub generator: Matrix,
}

/// Haar-distributed orthogonal matrix by Gram–Schmidt on a Gaussian draw.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let mut ok = true;
        for j in 0..n {
            for _ in 0..2 {
                for k in 0..j {
                    let proj: f64 = cols[j].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
                    let (head, tail) = cols.split_at_mut(j);
                    tail[0].iter_mut().zip(&head[k]).for_each(|(a, b)| *a -= proj * b);
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            let mut q = Matrix::zeros(n, n);
            for (j, col) in cols.iter().enumerate() {
                for (i, &v) in col.iter().enumerate() {
                    q[(i, j)] = v;
                }
            }
            return q;
        }
    }
}

/// Block-diagonal real matrix with the given conjugate-closed spectrum.
fn block_diagonal(spectrum: &[Complex64]) -> Result<Matrix> {
    let n = spectrum.len();
    let tol = 1e-12;
    let mut used = vec![false; n];
    let mut b = Matrix::zeros(n, n);
    let mut pos = 0;
    for i in 0..n {
        if used[i] {
            continue;
        }
        let l = spectrum[i];
        used[i] = true;
        if l.im.abs() <= tol {
            b[(pos, pos)] = l.re;
            pos += 1;
            continue;
        }
        let partner = (0..n)
            .find(|&j| !used[j] && (spectrum[j] - l.conj()).norm() <= tol * l.norm().max(1.0))
            .ok_or_else(|| KaeError::Parameter(format!("spectrum is not closed under conjugation: {l} has no partner")))?;
        used[partner] = true;
        let (a, w) = (l.re, l.im.abs());
        b[(pos, pos)] = a;
        b[(pos, pos + 1)] = -w;
        b[(pos + 1, pos)] = w;
        b[(pos + 1, pos + 1)] = a;
        pos += 2;
    }
    Ok(b)
}

/// Trajectories of `x_{k+1} = A x_k` where `A = Q B Qᵀ` has the requested
/// spectrum, `B` is block diagonal and `Q` a random orthogonal matrix.
/// Initial states are random unit vectors.
pub fn gen_linear_dataset<R: Rng + ?Sized>(
    spectrum: &[Complex64],
    n_traj: usize,
    steps: usize,
    rng: &mut R,
) -> Result<LinearSystem> {
    if spectrum.is_empty() {
        return Err(KaeError::Parameter("spectrum must be non-empty".into()));
    }
    if steps < 2 {
        return Err(KaeError::Parameter(format!("steps must be >= 2, got {steps}")));
    }
    let n = spectrum.len();
    let b = block_diagonal(spectrum)?;
    let q = random_orthogonal(n, rng);
    let a = q.matmul(&b)?.matmul_transposed(&q)?;

    let mut trajectories = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        let mut data = Vec::with_capacity(steps * n);
        data.extend_from_slice(&x);
        for _ in 1..steps {
            x = a.mat_vec(&x)?;
            data.extend_from_slice(&x);
        }
        trajectories.push(Trajectory::new(Matrix::from_vec(steps, n, data)?)?);
    }
    let spectrum_desc = spectrum.iter().map(|l| format!("{}{:+}i", l.re, l.im)).collect::<Vec<_>>().join(",");
    let metadata = BTreeMap::from([
        ("generator".to_string(), "linear".to_string()),
        ("spectrum".to_string(), spectrum_desc),
    ]);
    Ok(LinearSystem { dataset: Dataset::new(1.0, trajectories, metadata)?, generator: a })
}
