use crate::error::{KaeError, Result};
use crate::linalg::Matrix;

/// Mean squared error over all elements and its gradient with respect to `a`.
pub fn mse(a: &Matrix, b: &Matrix) -> Result<(f64, Matrix)> {
    if a.shape() != b.shape() {
        return Err(KaeError::Dimension(format!(
            "mse operands have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.as_slice().len();
    if n == 0 {
        return Err(KaeError::Dimension("mse of empty batch".into()));
    }
    let diff = a.sub(b)?;
    let value = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / n as f64;
    Ok((value, diff.scale(2.0 / n as f64)))
}
