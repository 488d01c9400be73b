use faer::Mat;

use crate::{CMatrix, Error, Result};

/// Thin SVD `a = U diag(s) V^H` with singular values in descending order.
///
/// Backed by faer; nalgebra's SVD loses accuracy on rank-deficient input,
/// which is exactly the single-path channel case.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd(a: &CMatrix) -> Result<Svd> {
    let (rows, cols) = a.shape();
    let m = Mat::from_fn(rows, cols, |i, j| a[(i, j)]);
    let dec = m.thin_svd().map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let k = rows.min(cols);
    let (u, s, v) = (dec.U(), dec.S().column_vector(), dec.V());
    Ok(Svd {
        u: CMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
        singular_values: (0..k).map(|i| s[i].re).collect(),
        v: CMatrix::from_fn(cols, k, |i, j| v[(i, j)]),
    })
}
