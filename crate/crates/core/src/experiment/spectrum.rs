//! Eigenvalue-modulus histograms of freshly initialised operators.
//!
//! A report operator is the product of `depth` independently drawn `n × n`
//! layers. Xavier fans follow the stacked `(depth, n, n)` weight tensor:
//! `fan_in = n·n`, `fan_out = depth·n`. Eigeninit resamples the spectrum of
//! a Gaussian product, so its moduli follow the spike-and-slab draw exactly.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{KaeError, Result};
use crate::linalg::{eigenvalues, Matrix};
use crate::spectral::{eigeninit, SpikeSlab, EIGENINIT_RETRIES};

pub const BIN_WIDTH: f64 = 0.05;
pub const BIN_COUNT: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitScheme {
    /// `N(0, 1/n)` per layer.
    Gaussian,
    Xavier,
    Eigeninit(SpikeSlab),
}

impl InitScheme {
    pub fn name(&self) -> String {
        match self {
            InitScheme::Gaussian => "gaussian".into(),
            InitScheme::Xavier => "xavier".into(),
            InitScheme::Eigeninit(s) => format!("eigeninit_theta_{}", s.theta),
        }
    }

    fn product<R: Rng + ?Sized>(n: usize, depth: usize, dist: &impl Distribution<f64>, rng: &mut R) -> Result<Matrix> {
        let mut out = Matrix::identity(n);
        for _ in 0..depth {
            let layer = Matrix::from_vec(n, n, dist.sample_iter(&mut *rng).take(n * n).collect())?;
            out = layer.matmul(&out)?;
        }
        Ok(out)
    }

    /// One report operator.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, depth: usize, rng: &mut R) -> Result<Matrix> {
        let gaussian = Normal::new(0.0, (1.0 / n as f64).sqrt()).expect("positive std");
        match self {
            InitScheme::Gaussian => Self::product(n, depth, &gaussian, rng),
            InitScheme::Xavier => {
                let (fan_in, fan_out) = ((n * n) as f64, (depth * n) as f64);
                let bound = (6.0 / (fan_in + fan_out)).sqrt();
                let uniform = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Self::product(n, depth, &uniform, rng)
            }
            InitScheme::Eigeninit(spec) => {
                let mut last = None;
                for _ in 0..EIGENINIT_RETRIES {
                    let base = Self::product(n, depth, &gaussian, rng)?;
                    match eigeninit(&base, spec, rng) {
                        Ok(u) => return Ok(u),
                        Err(e @ (KaeError::IllConditioned { .. } | KaeError::Convergence { .. })) => last = Some(e),
                        Err(e) => return Err(e),
                    }
                }
                Err(last.expect("at least one attempt"))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpectrum {
    pub name: String,
    /// Counts per bin `[k·w, (k+1)·w)`.
    pub counts: Vec<u64>,
    /// Moduli at or beyond the last bin edge.
    pub overflow: u64,
    pub mean: f64,
    pub total: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub n: usize,
    pub depth: usize,
    pub samples: usize,
    pub schemes: Vec<SchemeSpectrum>,
}

pub fn init_spectrum_report<R: Rng + ?Sized>(
    n: usize,
    depth: usize,
    schemes: &[InitScheme],
    samples: usize,
    rng: &mut R,
) -> Result<SpectrumReport> {
    if n == 0 || depth == 0 || samples == 0 {
        return Err(KaeError::Parameter(format!(
            "n, depth and samples must be positive, got n={n} depth={depth} samples={samples}"
        )));
    }
    let mut out = Vec::with_capacity(schemes.len());
    for scheme in schemes {
        let mut counts = vec![0u64; BIN_COUNT];
        let mut overflow = 0;
        let mut sum = 0.0;
        let mut total = 0u64;
        for _ in 0..samples {
            for l in eigenvalues(&scheme.draw(n, depth, rng)?)? {
                let r = l.norm();
                // Edge guard so roundoff below an edge (0.9999999999) lands in
                // the bin the exact value belongs to.
                let bin = (r / BIN_WIDTH + 1e-9).floor() as usize;
                match counts.get_mut(bin) {
                    Some(c) => *c += 1,
                    None => overflow += 1,
                }
                sum += r;
                total += 1;
            }
        }
        out.push(SchemeSpectrum { name: scheme.name(), counts, overflow, mean: sum / total as f64, total });
    }
    Ok(SpectrumReport { n, depth, samples, schemes: out })
}

impl SpectrumReport {
    /// `bin_low,bin_high,<scheme>…` with relative frequencies.
    pub fn write_histogram<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "bin_low,bin_high")?;
        for s in &self.schemes {
            write!(out, ",{}", s.name)?;
        }
        writeln!(out)?;
        for k in 0..BIN_COUNT {
            write!(out, "{:.2},{:.2}", k as f64 * BIN_WIDTH, (k + 1) as f64 * BIN_WIDTH)?;
            for s in &self.schemes {
                write!(out, ",{}", s.counts[k] as f64 / s.total as f64)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// `scheme,mean_modulus,eigenvalues,overflow`.
    pub fn write_summary<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "scheme,mean_modulus,eigenvalues,overflow")?;
        for s in &self.schemes {
            writeln!(out, "{},{},{},{}", s.name, s.mean, s.total, s.overflow)?;
        }
        Ok(())
    }
}
