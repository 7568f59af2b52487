use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{KaeError, Result};
use crate::linalg::Matrix;

/// Element-wise weight initialisation schemes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// `N(0, 2 / fan_in)`.
    He,
    /// `U(-b, b)` with `b = √(6 / (fan_in + fan_out))`.
    Xavier,
    /// `N(0, σ²)`.
    Gaussian { sigma: f64 },
}

/// Draws an `out × in` weight matrix. `fan_in` is the column count and
/// `fan_out` the row count.
pub fn init_weights<R: Rng + ?Sized>(rows: usize, cols: usize, scheme: Init, rng: &mut R) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(KaeError::Dimension(format!("weight shape {rows}x{cols} has a zero dimension")));
    }
    let (fan_in, fan_out) = (cols as f64, rows as f64);
    let len = rows * cols;
    let data: Vec<f64> = match scheme {
        Init::He => {
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            normal.sample_iter(&mut *rng).take(len).collect()
        }
        Init::Xavier => {
            let bound = (6.0 / (fan_in + fan_out)).sqrt();
            let uniform = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            uniform.sample_iter(&mut *rng).take(len).collect()
        }
        Init::Gaussian { sigma } => {
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(KaeError::Parameter(format!("gaussian sigma must be >= 0, got {sigma}")));
            }
            if sigma == 0.0 {
                vec![0.0; len]
            } else {
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                normal.sample_iter(&mut *rng).take(len).collect()
            }
        }
    };
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(m: &Matrix) -> (f64, f64) {
        let n = m.as_slice().len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / n;
        let var = m.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn he_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = init_weights(500, 200, Init::He, &mut rng).unwrap();
        let (_, var) = moments(&w);
        assert!((var - 0.01).abs() < 0.05 * 0.01, "variance {var}");
    }

    #[test]
    fn xavier_bound_and_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = init_weights(3, 3, Init::Xavier, &mut rng).unwrap();
        assert!(w.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        let w = init_weights(400, 250, Init::Xavier, &mut rng).unwrap();
        let expect = 2.0 / 650.0;
        let (_, var) = moments(&w);
        assert!((var - expect).abs() < 0.05 * expect);
    }

    #[test]
    fn gaussian_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(init_weights(2, 3, Init::Gaussian { sigma: 0.0 }, &mut rng).unwrap(), Matrix::zeros(2, 3));
        assert!(init_weights(2, 3, Init::Gaussian { sigma: -1.0 }, &mut rng).is_err());
        let w = init_weights(500, 200, Init::Gaussian { sigma: 0.3 }, &mut rng).unwrap();
        let (_, var) = moments(&w);
        assert!((var - 0.09).abs() < 0.05 * 0.09);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = init_weights(4, 4, Init::He, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_weights(4, 4, Init::He, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(init_weights(0, 3, Init::He, &mut rng).is_err());
    }
}
