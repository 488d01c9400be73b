//! Pilot grid design and observation synthesis.
//!
//! Pilot `(p, q)` transmits on beam `e_t(tx_directions[p])` and combines with
//! `e_r(rx_directions[q])`. The `m_r x m_t` observation matrix is vectorized
//! column by column, so pilot `(p, q)` lands at index `q + p * m_r`
//! (zero-based; combining index fastest).
//!
//! Every gain-matrix entry is a product of two array factors
//! `(1/n) sum_k exp(j pi k omega)`, which we evaluate as the finite sum
//! rather than the closed-form ratio so the aligned case `omega = 0` needs no
//! special handling.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::channel::{steering_vector, ArrayGeometry, PathSet};
use crate::numerics::{sample_complex_gaussian, RngState};
use crate::{CMatrix, CVector, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PilotGrid {
    tx_directions: Vec<f64>,
    rx_directions: Vec<f64>,
    beamformers: CMatrix,
    combiners: CMatrix,
}

impl PilotGrid {
    pub fn m_t(&self) -> usize {
        self.tx_directions.len()
    }

    pub fn m_r(&self) -> usize {
        self.rx_directions.len()
    }

    /// Total number of pilots, `m_r * m_t`.
    pub fn pilots(&self) -> usize {
        self.m_t() * self.m_r()
    }

    pub fn tx_directions(&self) -> &[f64] {
        &self.tx_directions
    }

    pub fn rx_directions(&self) -> &[f64] {
        &self.rx_directions
    }

    /// `F`, one beamformer per column (`n_t x m_t`).
    pub fn beamformers(&self) -> &CMatrix {
        &self.beamformers
    }

    /// `W`, one combiner per column (`n_r x m_r`).
    pub fn combiners(&self) -> &CMatrix {
        &self.combiners
    }

    /// Vectorized index of pilot `(p, q)`.
    pub fn index(&self, p: usize, q: usize) -> usize {
        q + p * self.m_r()
    }

    /// Inverse of [`PilotGrid::index`]: `(p, q)`.
    pub fn pilot(&self, index: usize) -> (usize, usize) {
        (index / self.m_r(), index % self.m_r())
    }

    /// Direction list as text: `side index angle cos(angle)` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# side index angle_rad cos\n");
        for (i, a) in self.tx_directions.iter().enumerate() {
            let _ = writeln!(s, "tx {i} {a:.12} {:.12}", a.cos());
        }
        for (i, a) in self.rx_directions.iter().enumerate() {
            let _ = writeln!(s, "rx {i} {a:.12} {:.12}", a.cos());
        }
        s
    }

    fn check_geometry(&self, geom: &ArrayGeometry) -> Result<()> {
        if self.beamformers.nrows() != geom.n_t || self.combiners.nrows() != geom.n_r {
            return Err(Error::invalid("pilot grid was designed for a different array"));
        }
        Ok(())
    }
}

/// Centers of `m` equal bins over `[-1, 1]`: `-1 + (2p - 1) / m`, p = 1..m.
pub fn cosine_bin_centers(m: usize) -> Vec<f64> {
    (1..=m).map(|p| -1.0 + (2 * p - 1) as f64 / m as f64).collect()
}

/// Grid whose beams sit at the arccosines of uniform cosine-bin centers.
pub fn design_grid(m_t: usize, m_r: usize, geom: &ArrayGeometry) -> Result<PilotGrid> {
    if m_t == 0 || m_r == 0 {
        return Err(Error::invalid("grid needs at least one direction per side"));
    }
    let tx_directions: Vec<f64> = cosine_bin_centers(m_t).into_iter().map(f64::acos).collect();
    let rx_directions: Vec<f64> = cosine_bin_centers(m_r).into_iter().map(f64::acos).collect();
    Ok(grid_from_directions(tx_directions, rx_directions, geom))
}

/// Grid with caller-chosen directions (e.g. uniform angle quantization).
pub fn grid_from_directions(tx_directions: Vec<f64>, rx_directions: Vec<f64>, geom: &ArrayGeometry) -> PilotGrid {
    let mut beamformers = CMatrix::zeros(geom.n_t, tx_directions.len());
    for (p, &a) in tx_directions.iter().enumerate() {
        beamformers.set_column(p, &steering_vector(a, geom.n_t));
    }
    let mut combiners = CMatrix::zeros(geom.n_r, rx_directions.len());
    for (q, &a) in rx_directions.iter().enumerate() {
        combiners.set_column(q, &steering_vector(a, geom.n_r));
    }
    PilotGrid { tx_directions, rx_directions, beamformers, combiners }
}

/// `(1/n) sum_{k<n} exp(j pi k omega)`.
pub fn array_factor(omega: f64, n: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        acc += Complex64::cis(PI * k as f64 * omega);
    }
    acc / n as f64
}

/// Derivative of [`array_factor`] with respect to `omega`.
pub fn array_factor_derivative(omega: f64, n: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..n {
        let kf = k as f64;
        acc += Complex64::new(0.0, PI * kf) * Complex64::cis(PI * kf * omega);
    }
    acc / n as f64
}

/// `e^H(angle) e(beam)` for an `n`-element array.
pub fn beam_gain(angle: f64, beam: f64, n: usize) -> Complex64 {
    array_factor(angle.cos() - beam.cos(), n)
}

/// Per-path factors of the gain matrix: for path `l`, `tx[p]` is
/// `e_t^H(phi_l) e_t(phibar_p)` and `rx[q]` is `e_r^H(psibar_q) e_r(psi_l)`.
struct PathFactors {
    tx: Vec<Complex64>,
    rx: Vec<Complex64>,
    d_tx: Vec<Complex64>,
    d_rx: Vec<Complex64>,
}

fn path_factors(phi: f64, psi: f64, grid: &PilotGrid, geom: &ArrayGeometry, derivatives: bool) -> PathFactors {
    let (cphi, cpsi) = (phi.cos(), psi.cos());
    let tx: Vec<Complex64> = grid.tx_directions.iter().map(|b| array_factor(cphi - b.cos(), geom.n_t)).collect();
    let rx: Vec<Complex64> = grid.rx_directions.iter().map(|b| array_factor(cpsi - b.cos(), geom.n_r).conj()).collect();
    let (d_tx, d_rx) = if derivatives {
        let (sphi, spsi) = (phi.sin(), psi.sin());
        (
            grid.tx_directions
                .iter()
                .map(|b| -sphi * array_factor_derivative(cphi - b.cos(), geom.n_t))
                .collect(),
            grid.rx_directions
                .iter()
                .map(|b| -spsi * array_factor_derivative(cpsi - b.cos(), geom.n_r).conj())
                .collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    PathFactors { tx, rx, d_tx, d_rx }
}

fn check_theta(theta: &[f64]) -> Result<usize> {
    if theta.len() % 2 != 0 {
        return Err(Error::invalid(format!("angle vector has odd length {}", theta.len())));
    }
    if theta.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("angle vector has non-finite entries"));
    }
    Ok(theta.len() / 2)
}

/// Gain matrix `Phi(theta)`, `m_r * m_t` rows by `L` columns: entry
/// `(q + p m_r, l)` is `e_r^H(psibar_q) e_r(psi_l) e_t^H(phi_l) e_t(phibar_p)`.
pub fn build_phi(theta: &[f64], grid: &PilotGrid, geom: &ArrayGeometry) -> Result<CMatrix> {
    let l_count = check_theta(theta)?;
    grid.check_geometry(geom)?;
    let (m_t, m_r) = (grid.m_t(), grid.m_r());
    let mut phi = CMatrix::zeros(m_t * m_r, l_count);
    for l in 0..l_count {
        let f = path_factors(theta[l], theta[l_count + l], grid, geom, false);
        for p in 0..m_t {
            for q in 0..m_r {
                phi[(q + p * m_r, l)] = f.rx[q] * f.tx[p];
            }
        }
    }
    Ok(phi)
}

/// Derivatives of the gain matrix. Only column `l` of `Phi` depends on
/// `phi_l` and `psi_l`, so the result packs `d Phi[:, l] / d phi_l` into
/// column `l` of the first matrix and `d Phi[:, l] / d psi_l` into column `l`
/// of the second.
pub fn phi_derivatives(theta: &[f64], grid: &PilotGrid, geom: &ArrayGeometry) -> Result<(CMatrix, CMatrix)> {
    let l_count = check_theta(theta)?;
    grid.check_geometry(geom)?;
    let (m_t, m_r) = (grid.m_t(), grid.m_r());
    let mut d_phi = CMatrix::zeros(m_t * m_r, l_count);
    let mut d_psi = CMatrix::zeros(m_t * m_r, l_count);
    for l in 0..l_count {
        let f = path_factors(theta[l], theta[l_count + l], grid, geom, true);
        for p in 0..m_t {
            for q in 0..m_r {
                let i = q + p * m_r;
                d_phi[(i, l)] = f.rx[q] * f.d_tx[p];
                d_psi[(i, l)] = f.d_rx[q] * f.tx[p];
            }
        }
    }
    Ok((d_phi, d_psi))
}

/// One slot of vectorized pilot measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    pub y: CVector,
    /// Per-entry complex noise variance. Zero marks a noiseless batch.
    pub noise_variance: f64,
}

impl ObservationBatch {
    pub fn new(y: CVector, noise_variance: f64) -> Result<Self> {
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(Error::invalid(format!("bad noise variance {noise_variance}")));
        }
        Ok(ObservationBatch { y, noise_variance })
    }

    fn check(&self, grid: &PilotGrid) -> Result<()> {
        if self.y.len() != grid.pilots() {
            return Err(Error::invalid(format!(
                "observation has {} entries, grid has {} pilots",
                self.y.len(),
                grid.pilots()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_batch(y: &ObservationBatch, grid: &PilotGrid) -> Result<()> {
    y.check(grid)
}

/// `y = vec(W^H H F) + v` with `v ~ CN(0, noise_variance I)`.
pub fn sound_channel(h: &CMatrix, grid: &PilotGrid, noise_variance: f64, rng: &mut RngState) -> Result<ObservationBatch> {
    if h.shape() != (grid.combiners.nrows(), grid.beamformers.nrows()) {
        return Err(Error::invalid(format!(
            "channel is {:?}, grid expects ({}, {})",
            h.shape(),
            grid.combiners.nrows(),
            grid.beamformers.nrows()
        )));
    }
    let y_mat = grid.combiners.adjoint() * h * &grid.beamformers;
    // nalgebra storage is column-major, which is exactly vec().
    let clean = CVector::from_column_slice(y_mat.as_slice());
    let noise = sample_complex_gaussian(rng, noise_variance, clean.len())?;
    ObservationBatch::new(clean + noise, noise_variance)
}

/// Noiseless observation of a path set, `Phi(theta) * gains`.
pub fn predict_observation(paths: &PathSet, grid: &PilotGrid, geom: &ArrayGeometry) -> Result<CVector> {
    let phi = build_phi(paths.angles(), grid, geom)?;
    Ok(phi * CVector::from_column_slice(paths.gains()))
}

/// Fraction of the slot spent on pilots.
pub fn pilot_overhead(grid: &PilotGrid, slot_duration: f64, symbol_rate: f64) -> f64 {
    grid.pilots() as f64 / (slot_duration * symbol_rate)
}
