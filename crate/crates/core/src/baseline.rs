//! Closed-form linear least squares, used as the paired-only and oracle
//! regressors.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Minimum-norm solution of `min ‖[X 1]·Bᵀ − Y‖²` (bias column optional),
/// returned as a single identity-activation layer.
pub fn least_squares(x: ArrayView2<f64>, y: ArrayView2<f64>, fit_bias: bool) -> Result<ModelParams> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("least squares needs at least one row"));
    }
    let (n, d, e) = (x.nrows(), x.ncols(), y.ncols());
    let cols = d + usize::from(fit_bias);
    let a = DMatrix::from_fn(n, cols, |i, j| if j < d { x[[i, j]] } else { 1.0 });
    let b = DMatrix::from_fn(n, e, |i, j| y[[i, j]]);
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * f64::EPSILON * n.max(cols) as f64;
    let sol = svd
        .solve(&b, tol)
        .map_err(|m| Error::Numerical(format!("least squares failed: {m}")))?;
    let weight = Array2::from_shape_fn((e, d), |(i, j)| sol[(j, i)]);
    let bias = if fit_bias {
        Array1::from_shape_fn(e, |i| sol[(d, i)])
    } else {
        Array1::zeros(e)
    };
    ModelParams::linear(weight, bias)
}
