//! Numerical kernels shared by the estimators: the complex pseudo-inverse,
//! a Levenberg-Marquardt driver, chi-squared quantiles and seeded sampling.

mod chi2;
mod lm;
mod pinv;
mod rng;
mod svd;

pub use chi2::{chi_squared_quantile, chi_squared_sf};
pub use lm::{lm_minimize, LmConfig, LmOutcome, Termination};
pub use pinv::{pseudo_inverse, DEFAULT_RANK_TOLERANCE};
pub use rng::{sample_complex_gaussian, RngState};
pub use svd::{svd, Svd};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Stacks a complex vector as `[Re; Im]`.
pub fn stack_real(v: &DVector<Complex64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Stacks a complex matrix row-block-wise as `[Re; Im]`.
pub fn stack_real_matrix(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let rows = m.nrows();
    DMatrix::from_fn(2 * rows, m.ncols(), |i, j| {
        if i < rows {
            m[(i, j)].re
        } else {
            m[(i - rows, j)].im
        }
    })
}
