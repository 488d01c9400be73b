use super::svd::svd;
use crate::{CMatrix, Error, Result};

/// Relative singular-value cutoff used when callers have no better value.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse of a complex matrix via the SVD.
///
/// Singular values below `rank_tolerance * sigma_max` are treated as zero.
/// An empty matrix (no rows or no columns) maps to the empty transpose shape.
pub fn pseudo_inverse(a: &CMatrix, rank_tolerance: f64) -> Result<CMatrix> {
    if !(rank_tolerance > 0.0) || !rank_tolerance.is_finite() {
        return Err(Error::invalid(format!("rank tolerance must be positive, got {rank_tolerance}")));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("pseudo-inverse of a matrix with non-finite entries"));
    }
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(CMatrix::zeros(cols, rows));
    }

    let svd = svd(a)?;
    let (u, v) = (&svd.u, &svd.v);
    let sigma_max = svd.singular_values[0];
    let cutoff = rank_tolerance * sigma_max;

    let mut out = CMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        // out += v_k * (1/s) * u_k^H
        let inv = 1.0 / s;
        for i in 0..cols {
            let vi = v[(i, k)] * inv;
            for j in 0..rows {
                out[(i, j)] += vi * u[(j, k)].conj();
            }
        }
    }
    Ok(out)
}
