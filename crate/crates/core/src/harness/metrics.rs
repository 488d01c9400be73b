//! Channel-level metrics: NMSE, SNR conversion and beamformed spectral
//! efficiency.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::channel::{ArrayGeometry, PathSet};
use crate::numerics::svd;
use crate::{CMatrix, Error, Result};

/// Reported in place of `-inf` for an exact estimate.
pub const NMSE_FLOOR_DB: f64 = -150.0;

/// `||H_est - H_true||_F^2 / ||H_true||_F^2`.
pub fn nmse_ratio(h_true: &CMatrix, h_est: &CMatrix) -> Result<f64> {
    if h_true.shape() != h_est.shape() {
        return Err(Error::invalid(format!("shape mismatch {:?} vs {:?}", h_true.shape(), h_est.shape())));
    }
    let den = h_true.norm_squared();
    if !(den > 0.0) {
        return Err(Error::invalid("NMSE of a zero channel is undefined"));
    }
    Ok((h_est - h_true).norm_squared() / den)
}

pub fn ratio_to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        NMSE_FLOOR_DB
    } else {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    }
}

pub fn nmse_db(h_true: &CMatrix, h_est: &CMatrix) -> Result<f64> {
    nmse_ratio(h_true, h_est).map(ratio_to_db)
}

/// Mean of per-trial ratios, then dB; the std is over per-trial dB values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmseAggregate {
    pub mean_db: f64,
    pub std_db: f64,
    pub trials: usize,
}

pub fn aggregate_nmse(ratios: &[f64]) -> NmseAggregate {
    let n = ratios.len();
    if n == 0 {
        return NmseAggregate { mean_db: f64::NAN, std_db: f64::NAN, trials: 0 };
    }
    let mean_ratio = ratios.iter().sum::<f64>() / n as f64;
    let dbs: Vec<f64> = ratios.iter().map(|&r| ratio_to_db(r)).collect();
    let mean_db_of_trials = dbs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        dbs.iter().map(|d| (d - mean_db_of_trials).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    NmseAggregate { mean_db: ratio_to_db(mean_ratio), std_db: var.sqrt(), trials: n }
}

/// `10 log10(n_t n_r / sigma_v^2)` with unit transmit power.
pub fn snr_db(noise_variance: f64, geom: &ArrayGeometry) -> Result<f64> {
    if !(noise_variance > 0.0) {
        return Err(Error::invalid("SNR needs a positive noise variance"));
    }
    Ok(10.0 * ((geom.n_t * geom.n_r) as f64 / noise_variance).log10())
}

/// Inverse of [`snr_db`].
pub fn noise_variance_for_snr(snr_db: f64, geom: &ArrayGeometry) -> f64 {
    (geom.n_t * geom.n_r) as f64 / 10f64.powf(snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEfficiency {
    pub bits: f64,
    /// The estimate was zero, so canonical beams were used.
    pub fallback: bool,
}

/// Rate achieved on `h_true` when beamforming along the top singular pair of
/// `h_est`: `log2(1 + |w^H H f|^2 / sigma_v^2)`.
pub fn spectral_efficiency(h_true: &CMatrix, h_est: &CMatrix, noise_variance: f64) -> Result<SpectralEfficiency> {
    if h_true.shape() != h_est.shape() {
        return Err(Error::invalid("shape mismatch"));
    }
    if !(noise_variance > 0.0) {
        return Err(Error::invalid("spectral efficiency needs a positive noise variance"));
    }
    let (rows, cols) = h_est.shape();
    let (w, f, fallback) = if h_est.norm() == 0.0 {
        let mut w = DVector::zeros(rows);
        let mut f = DVector::zeros(cols);
        w[0] = Complex64::new(1.0, 0.0);
        f[0] = Complex64::new(1.0, 0.0);
        (w, f, true)
    } else {
        let svd = svd(h_est)?;
        let w = svd.u.column(0).into_owned();
        let f = svd.v.column(0).into_owned();
        (w, f, false)
    };
    let gain = w.dotc(&(h_true * f)).norm_sqr();
    Ok(SpectralEfficiency { bits: (1.0 + gain / noise_variance).log2(), fallback })
}

/// Greedy nearest-neighbour matching of estimated to true paths in
/// `(cos phi, cos psi)`. Returns `(estimated, true, distance)` triples.
pub fn match_paths(estimate: &PathSet, truth: &PathSet) -> Vec<(usize, usize, f64)> {
    let dist = |a: (f64, f64), b: (f64, f64)| (a.0.cos() - b.0.cos()).hypot(a.1.cos() - b.1.cos());
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..estimate.len() {
        let (_, a0, a1) = estimate.path(i);
        for j in 0..truth.len() {
            let (_, b0, b1) = truth.path(j);
            pairs.push((i, j, dist((a0, a1), (b0, b1))));
        }
    }
    pairs.sort_by(|x, y| x.2.total_cmp(&y.2));
    let mut used_est = vec![false; estimate.len()];
    let mut used_true = vec![false; truth.len()];
    let mut out = Vec::new();
    for (i, j, d) in pairs {
        if !used_est[i] && !used_true[j] {
            used_est[i] = true;
            used_true[j] = true;
            out.push((i, j, d));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::assemble_channel;
    use crate::numerics::RngState;

    fn random_h(rng: &mut RngState) -> CMatrix {
        CMatrix::from_fn(16, 16, |_, _| rng.complex_gaussian(1.0))
    }

    #[test]
    fn nmse_reference_points() {
        let mut rng = RngState::new(1);
        let h = random_h(&mut rng);
        assert!(nmse_db(&h, &CMatrix::zeros(16, 16)).unwrap().abs() < 1e-12);
        assert_eq!(nmse_db(&h, &h).unwrap(), NMSE_FLOOR_DB);
        let e = random_h(&mut rng);
        let e = &e * Complex64::new(0.1 * h.norm() / e.norm(), 0.0);
        assert!((nmse_db(&h, &(&h + e)).unwrap() + 20.0).abs() < 1e-9);
        assert!(nmse_db(&CMatrix::zeros(16, 16), &h).is_err());
    }

    #[test]
    fn aggregate_is_mean_of_ratios() {
        let agg = aggregate_nmse(&[0.1, 0.001]);
        assert!((agg.mean_db - 10.0 * 0.0505f64.log10()).abs() < 1e-12);
        assert!((agg.std_db - (20f64 / 2f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn snr_conversions() {
        let geom = ArrayGeometry::new(16, 16).unwrap();
        assert!(snr_db(256.0, &geom).unwrap().abs() < 1e-12);
        assert!((snr_db(2.56, &geom).unwrap() - 20.0).abs() < 1e-12);
        for v in [0.01, 2.56, 77.0] {
            let back = noise_variance_for_snr(snr_db(v, &geom).unwrap(), &geom);
            assert!((back - v).abs() < 1e-12 * v);
        }
    }

    #[test]
    fn rank_one_rate() {
        let geom = ArrayGeometry::new(16, 16).unwrap();
        let alpha = Complex64::new(9.0, -12.0);
        let p = PathSet::new(vec![alpha], vec![0.4, 2.0]).unwrap();
        let h = assemble_channel(&p, &geom);
        let r = spectral_efficiency(&h, &h, 2.56).unwrap();
        assert!((r.bits - (1.0 + 225.0 / 2.56f64).log2()).abs() < 1e-9);
        assert!(!r.fallback);
    }

    #[test]
    fn true_channel_beats_mismatched_estimates() {
        let mut rng = RngState::new(5);
        for _ in 0..50 {
            let h = random_h(&mut rng);
            let best = spectral_efficiency(&h, &h, 1.0).unwrap().bits;
            let other = spectral_efficiency(&h, &random_h(&mut rng), 1.0).unwrap().bits;
            assert!(best >= other - 1e-12);
        }
    }

    #[test]
    fn zero_estimate_falls_back() {
        let mut rng = RngState::new(2);
        let h = random_h(&mut rng);
        let r = spectral_efficiency(&h, &CMatrix::zeros(16, 16), 1.0).unwrap();
        assert!(r.fallback);
        assert!((r.bits - (1.0 + h[(0, 0)].norm_sqr()).log2()).abs() < 1e-12);
    }

    #[test]
    fn matching_pairs_nearest() {
        let c = |x: f64| Complex64::new(x, 0.0);
        let truth = PathSet::new(vec![c(1.0), c(2.0)], vec![0.5, 2.0, 1.0, 2.5]).unwrap();
        let est = PathSet::new(vec![c(2.0), c(1.0), c(0.1)], vec![2.01, 0.49, 1.5, 2.49, 1.01, 0.2]).unwrap();
        let m = match_paths(&est, &truth);
        assert_eq!(m.len(), 2);
        assert!(m.iter().any(|&(i, j, _)| i == 0 && j == 1));
        assert!(m.iter().any(|&(i, j, _)| i == 1 && j == 0));
    }
}
