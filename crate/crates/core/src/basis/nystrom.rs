//! Quadrature discretization of the 1D kernel integral operator.
//!
//! Independent of the Hermite closed form: it only evaluates the kernel and
//! hands a dense symmetric matrix to a generic eigensolver.

use nalgebra::{DMatrix, SymmetricEigen};

use super::KernelParams;
use crate::error::{Error, Result};

/// Minimum number of quadrature nodes accepted by [`nystrom_oracle`].
pub const MIN_GRID: usize = 64;

/// Half-width of the integration interval. The kernel diagonal decays like
/// `exp(-2a x²)`; past this point it is below 1e-16.
pub fn interval_half_width(params: &KernelParams) -> f64 {
    (18.5 / params.a()).sqrt()
}

/// Eigenvalues of the midpoint-rule discretization of
/// `f ↦ ∫ k(x, y) f(y) dy` on `[-W, W]`, sorted descending.
pub fn nystrom_oracle(params: &KernelParams, grid_size: usize, count: usize) -> Result<Vec<f64>> {
    if grid_size < MIN_GRID {
        return Err(Error::InvalidParameter(format!(
            "grid_size {grid_size} below minimum {MIN_GRID}"
        )));
    }
    if count > grid_size {
        return Err(Error::InvalidParameter(format!(
            "requested {count} eigenvalues from a {grid_size}-point grid"
        )));
    }
    let w = interval_half_width(params);
    let h = 2.0 * w / grid_size as f64;
    let nodes: Vec<f64> = (0..grid_size).map(|i| -w + (i as f64 + 0.5) * h).collect();
    let k = DMatrix::from_fn(grid_size, grid_size, |i, j| params.eval_1d(nodes[i], nodes[j]) * h);
    let mut values: Vec<f64> = SymmetricEigen::new(k).eigenvalues.iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values.truncate(count);
    Ok(values)
}

/// Full spectrum, including the numerically negative tail.
pub fn nystrom_spectrum(params: &KernelParams, grid_size: usize) -> Result<Vec<f64>> {
    nystrom_oracle(params, grid_size, grid_size)
}
