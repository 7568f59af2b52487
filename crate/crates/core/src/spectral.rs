//! Spectral regularisation of the Koopman matrix.
//!
//! *Eigeninit* resamples the eigenvalue moduli of a random Gaussian matrix
//! from a spike-and-slab distribution `θ·U(a, b) + (1 − θ)·δ(1)`, keeping
//! the phases and the eigenvectors, then rebuilds a real matrix.
//! Conjugate pairs share one draw so the result stays real.
//!
//! *Eigenloss* is the penalty `Σ_j (|λ_j| − 1)²`, differentiated through the
//! simple-eigenvalue adjoint `dλ_j = u_jᴴ dU v_j / (u_jᴴ v_j)`.

use log::warn;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{KaeError, Result};
use crate::linalg::{eig_decompose, eigenvalues, Matrix, Pairing, SpectralDecomposition, TOLERANCES};

/// Draws of a fresh Gaussian matrix before eigeninit gives up.
pub const EIGENINIT_RETRIES: usize = 10;

/// Spike-and-slab distribution over eigenvalue moduli.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeSlab {
    /// Probability of drawing from the slab rather than the spike at 1.
    pub theta: f64,
    #[serde(default = "SpikeSlab::default_low")]
    pub low: f64,
    #[serde(default = "SpikeSlab::default_high")]
    pub high: f64,
}

impl SpikeSlab {
    pub fn new(theta: f64) -> Self {
        Self { theta, low: 0.0, high: 1.0 }
    }

    pub fn with_slab(theta: f64, low: f64, high: f64) -> Self {
        Self { theta, low, high }
    }

    fn default_low() -> f64 {
        0.0
    }

    fn default_high() -> f64 {
        1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(KaeError::Parameter(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if !(0.0 <= self.low && self.low < self.high && self.high <= 1.0) {
            return Err(KaeError::Parameter(format!(
                "slab interval ({}, {}) must satisfy 0 <= a < b <= 1",
                self.low, self.high
            )));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, slab: &Uniform<f64>, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.theta {
            slab.sample(rng)
        } else {
            1.0
        }
    }
}

/// Draws one modulus per eigenvalue; conjugate partners share a draw.
///
/// Pairs are drawn first in eigenvalue order, then the real eigenvalues.
pub fn sample_moduli<R: Rng + ?Sized>(pairing: &[Pairing], spec: &SpikeSlab, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let slab = Uniform::new(spec.low, spec.high).expect("validated interval");
    let mut moduli = vec![f64::NAN; pairing.len()];
    for (j, p) in pairing.iter().enumerate() {
        if let Pairing::Conjugate { partner } = *p {
            if partner >= pairing.len() || pairing[partner] != (Pairing::Conjugate { partner: j }) {
                return Err(KaeError::Pairing(format!("index {j} names invalid partner {partner}")));
            }
            if partner > j {
                let r = spec.draw(&slab, rng);
                moduli[j] = r;
                moduli[partner] = r;
            }
        }
    }
    for (j, p) in pairing.iter().enumerate() {
        if *p == Pairing::Real {
            moduli[j] = spec.draw(&slab, rng);
        }
    }
    Ok(moduli)
}

/// Replaces each eigenvalue modulus by `moduli[j]`, keeping its phase, and
/// rebuilds the real matrix. Zero eigenvalues take phase 0.
pub fn apply_moduli(dec: &SpectralDecomposition, moduli: &[f64]) -> Result<Matrix> {
    if moduli.len() != dec.dim() {
        return Err(KaeError::Dimension(format!("{} moduli for {} eigenvalues", moduli.len(), dec.dim())));
    }
    let values: Vec<Complex64> = dec
        .eigenvalues()
        .iter()
        .zip(moduli)
        .map(|(l, &r)| if l.norm() == 0.0 { Complex64::new(r, 0.0) } else { Complex64::from_polar(r, l.arg()) })
        .collect();
    let rec = dec.reconstruct_real(&values)?;
    if rec.relative_imag() > TOLERANCES.reconstruct_imag_rel {
        return Err(KaeError::IllConditioned { condition: dec.condition() });
    }
    Ok(rec.matrix)
}

/// Eigeninit applied to a given starting matrix.
pub fn eigeninit<R: Rng + ?Sized>(u0: &Matrix, spec: &SpikeSlab, rng: &mut R) -> Result<Matrix> {
    Ok(eigeninit_detailed(u0, spec, rng)?.0)
}

/// Eigeninit returning the drawn moduli alongside the matrix.
pub fn eigeninit_detailed<R: Rng + ?Sized>(u0: &Matrix, spec: &SpikeSlab, rng: &mut R) -> Result<(Matrix, Vec<f64>)> {
    spec.validate()?;
    let dec = eig_decompose(u0)?;
    let moduli = sample_moduli(dec.pairing(), spec, rng)?;
    let u = apply_moduli(&dec, &moduli)?;
    Ok((u, moduli))
}

/// Eigeninit from a fresh `N(0, 1/n)` draw, redrawing on decomposition
/// failure up to [`EIGENINIT_RETRIES`] times.
pub fn eigeninit_random<R: Rng + ?Sized>(n: usize, spec: &SpikeSlab, rng: &mut R) -> Result<Matrix> {
    spec.validate()?;
    if n == 0 {
        return Err(KaeError::Dimension("operator size must be positive".into()));
    }
    let normal = Normal::new(0.0, (1.0 / n as f64).sqrt()).expect("positive std");
    let mut last = None;
    for _ in 0..EIGENINIT_RETRIES {
        let data: Vec<f64> = normal.sample_iter(&mut *rng).take(n * n).collect();
        let u0 = Matrix::from_vec(n, n, data)?;
        match eigeninit(&u0, spec, rng) {
            Ok(u) => return Ok(u),
            Err(e @ (KaeError::IllConditioned { .. } | KaeError::Convergence { .. })) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// `Σ_j (|λ_j| − 1)²` over all eigenvalues of `u`.
pub fn eigenloss_value(u: &Matrix) -> Result<f64> {
    Ok(eigenvalues(u)?.iter().map(|l| (l.norm() - 1.0).powi(2)).sum())
}

/// Eigenloss value and gradient with respect to the matrix entries.
#[derive(Clone, Debug)]
pub struct EigenlossGrad {
    pub value: f64,
    pub grad: Matrix,
    /// Largest imaginary entry discarded from the complex gradient sum,
    /// relative to the gradient's Frobenius norm.
    pub imag_residual: f64,
    /// Set when two eigenvalues are closer than the degeneracy gap.
    pub degenerate: bool,
}

/// Gradient of [`eigenloss_value`] with modulus floor `floor` in the
/// denominator of `∂|λ|/∂λ`.
pub fn eigenloss_grad_with_floor(u: &Matrix, floor: f64) -> Result<EigenlossGrad> {
    let dec = eig_decompose(u)?;
    let n = dec.dim();
    let degenerate = n > 1 && dec.min_gap() < TOLERANCES.degenerate_gap;
    if degenerate {
        warn!("eigenloss gradient on a spectrum with gap {:e}; using the simple-eigenvalue formula", dec.min_gap());
    }
    let v = dec.right_vectors();
    let w = dec.right_inverse();
    let mut acc = vec![Complex64::new(0.0, 0.0); n * n];
    let mut value = 0.0;
    for (j, &lambda) in dec.eigenvalues().iter().enumerate() {
        let r = lambda.norm();
        value += (r - 1.0).powi(2);
        let factor = 2.0 * (r - 1.0) / r.max(floor);
        if factor == 0.0 {
            continue;
        }
        // conj(u_j) = row j of V⁻¹, and u_jᴴ v_j = 1 by construction.
        let coeff = lambda.conj() * factor;
        for a in 0..n {
            let wa = w[(j, a)] * coeff;
            for b in 0..n {
                acc[a * n + b] += wa * v[(b, j)];
            }
        }
    }
    let grad = Matrix::from_raw(n, n, acc.iter().map(|z| z.re).collect());
    let max_imag = acc.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    let norm = grad.frobenius_norm();
    let imag_residual = if norm > 0.0 { max_imag / norm } else { max_imag };
    Ok(EigenlossGrad { value, grad, imag_residual, degenerate })
}

/// Gradient of [`eigenloss_value`] using the default modulus floor.
pub fn eigenloss_grad(u: &Matrix) -> Result<Matrix> {
    Ok(eigenloss_grad_with_floor(u, TOLERANCES.modulus_floor)?.grad)
}

/// Weighted eigenloss term `ε_λ · Σ_j (|λ_j| − 1)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Eigenloss {
    pub weight: f64,
    #[serde(default = "Eigenloss::default_floor")]
    pub floor: f64,
}

impl Eigenloss {
    pub fn new(weight: f64) -> Self {
        Self { weight, floor: TOLERANCES.modulus_floor }
    }

    fn default_floor() -> f64 {
        TOLERANCES.modulus_floor
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(KaeError::Parameter(format!("eigenloss weight must be >= 0, got {}", self.weight)));
        }
        if !(self.floor > 0.0) {
            return Err(KaeError::Parameter(format!("modulus floor must be > 0, got {}", self.floor)));
        }
        Ok(())
    }

    /// Weighted value and gradient; a zero weight skips the decomposition.
    pub fn term(&self, u: &Matrix) -> Result<(f64, Matrix)> {
        if self.weight == 0.0 {
            return Ok((0.0, Matrix::zeros(u.rows(), u.cols())));
        }
        let g = eigenloss_grad_with_floor(u, self.floor)?;
        Ok((self.weight * g.value, g.grad.scale(self.weight)))
    }
}
