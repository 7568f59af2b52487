//! Koopman autoencoders with spectral initialisation and penalty.
//!
//! The crate is layered bottom-up:
//!
//! * [`linalg`]: dense matrices, eigendecomposition, SVD.
//! * [`nn`]: a small reverse-mode MLP toolkit with Adam.
//! * [`spectral`]: eigenvalue-modulus resampling ("eigeninit") and the
//!   unit-circle eigenvalue penalty ("eigenloss") with its gradient.
//! * [`model`]: the encoder / Koopman matrix / decoder model and training.
//! * [`dmd`]: exact dynamic mode decomposition and slab-probability estimation.
//! * [`data`]: synthetic trajectories, splitting, and the `KDS1` file format.
//! * [`experiment`]: configuration, multi-seed runs, metrics and reports.

pub mod data;
pub mod dmd;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod spectral;

pub use error::{KaeError, Result};
pub use linalg::{Matrix, SpectralDecomposition};
pub use num_complex::Complex64;
