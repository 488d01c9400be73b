use statrs::function::gamma::gamma_ur;

use crate::{Error, Result};

/// Right-tail probability `P(X > x)` of a chi-squared variable with `dof`
/// degrees of freedom.
pub fn chi_squared_sf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(0.5 * f64::from(dof), 0.5 * x)
}

/// Inverse of [`chi_squared_sf`]: the `x` whose right-tail probability is
/// `p_right_tail`.
///
/// Bisection on the regularized upper incomplete gamma function, bracketed
/// around the Wilson-Hilferty approximation.
pub fn chi_squared_quantile(p_right_tail: f64, dof: u32) -> Result<f64> {
    if !(p_right_tail > 0.0 && p_right_tail < 1.0) {
        return Err(Error::invalid(format!("tail probability {p_right_tail} outside (0, 1)")));
    }
    if dof == 0 {
        return Err(Error::invalid("chi-squared needs at least one degree of freedom"));
    }
    let k = f64::from(dof);
    let z = upper_normal_quantile(p_right_tail);
    let c = 2.0 / (9.0 * k);
    let guess = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(f64::MIN_POSITIVE);

    // sf is decreasing in x: grow the bracket until sf(lo) >= p >= sf(hi).
    let mut lo = guess;
    let mut hi = guess;
    while chi_squared_sf(lo, dof) < p_right_tail {
        lo *= 0.5;
        if lo < 1e-300 {
            lo = 0.0;
            break;
        }
    }
    while chi_squared_sf(hi, dof) > p_right_tail {
        hi = hi * 2.0 + 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_squared_sf(mid, dof) > p_right_tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Upper-tail standard normal quantile, Acklam's rational approximation.
/// Only seeds the bracket, so ~1e-9 relative accuracy is plenty.
fn upper_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    // lower-tail quantile of 1 - p
    let q = 1.0 - p;
    let lower = if q < 0.02425 {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    } else if q <= 1.0 - 0.02425 {
        let t = q - 0.5;
        let r = t * t;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * t
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let t = (-2.0 * p.ln()).sqrt();
        -(((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };
    lower
}
