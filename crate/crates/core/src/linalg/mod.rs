//! Dense linear algebra for the small square operators used throughout the
//! crate: eigendecomposition with left/right eigenvectors, SVD, spectral
//! radius and spectrum-modified reconstruction.

mod eig;
mod matrix;
mod svd;

pub use eig::{
    compare_eigenvalues, eig_decompose, eigenvalues, spectral_radius, Pairing, Reconstruction,
    SpectralDecomposition,
};
pub use matrix::{CMatrix, Matrix};
pub use svd::{svd, Svd};

/// Numerical thresholds shared by the spectral routines.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// QR sweeps allowed per matrix dimension.
    pub iteration_factor: usize,
    /// Largest acceptable `‖V‖₁‖V⁻¹‖₁` when reconstructing from eigenpairs.
    pub max_condition: f64,
    /// Relative slack when checking that replacement eigenvalues stay conjugate.
    pub pairing_rel: f64,
    /// Largest discarded imaginary entry, relative to the result norm.
    pub reconstruct_imag_rel: f64,
    /// Eigenvalue gap below which the spectrum is treated as degenerate.
    pub degenerate_gap: f64,
    /// Modulus floor in the eigenvalue-modulus gradient.
    pub modulus_floor: f64,
    /// Singular values below this fraction of the largest are rank deficient.
    pub rank_cutoff: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    iteration_factor: 100,
    max_condition: 1e12,
    pairing_rel: 1e-12,
    reconstruct_imag_rel: 1e-8,
    degenerate_gap: 1e-10,
    modulus_floor: 1e-12,
    rank_cutoff: 1e-12,
};
