//! Ground-truth channel: uniform linear arrays, the L-path channel matrix and
//! its dual-timescale evolution.
//!
//! Within a block the path gains are constant and the angles random-walk;
//! between blocks paths are born and die as a discretized M/M/inf process.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::numerics::RngState;
use crate::{CMatrix, CVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ArrayGeometry {
    pub n_t: usize,
    pub n_r: usize,
}

impl ArrayGeometry {
    pub fn new(n_t: usize, n_r: usize) -> Result<Self> {
        if n_t == 0 || n_r == 0 {
            return Err(Error::invalid("arrays need at least one antenna"));
        }
        Ok(ArrayGeometry { n_t, n_r })
    }
}

/// Reflects an angle into `[0, pi]`.
///
/// Reflection at 0 and at pi leaves `cos` unchanged, so the steering vector
/// (and hence the channel) is the same before and after.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a = 2.0 * PI - a;
    }
    a
}

/// Half-wavelength ULA response: entry `k` is `exp(-j pi k cos(angle)) / sqrt(n)`.
pub fn steering_vector(angle: f64, n: usize) -> CVector {
    let c = angle.cos();
    let norm = 1.0 / (n as f64).sqrt();
    CVector::from_fn(n, |k, _| Complex64::from_polar(norm, -PI * k as f64 * c))
}

pub fn steering_vector_tx(phi: f64, n_t: usize) -> CVector {
    steering_vector(phi, n_t)
}

pub fn steering_vector_rx(psi: f64, n_r: usize) -> CVector {
    steering_vector(psi, n_r)
}

/// Path gains and angles. Angles are stored as
/// `[phi_1 .. phi_L, psi_1 .. psi_L]` (departure angles first).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSet {
    gains: Vec<Complex64>,
    angles: Vec<f64>,
}

impl PathSet {
    /// Builds a path set, reflecting every angle into `[0, pi]`.
    pub fn new(gains: Vec<Complex64>, angles: Vec<f64>) -> Result<Self> {
        if angles.len() != 2 * gains.len() {
            return Err(Error::invalid(format!(
                "{} gains need {} angles, got {}",
                gains.len(),
                2 * gains.len(),
                angles.len()
            )));
        }
        if angles.iter().any(|a| !a.is_finite()) || gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::invalid("path parameters must be finite"));
        }
        let angles = angles.into_iter().map(wrap_angle).collect();
        Ok(PathSet { gains, angles })
    }

    pub fn empty() -> Self {
        PathSet::default()
    }

    /// `count` paths with CN(0, gain_variance) gains and angles uniform on (0, pi).
    pub fn random(count: usize, gain_variance: f64, rng: &mut RngState) -> Self {
        let mut paths = PathSet::empty();
        for _ in 0..count {
            let (g, phi, psi) = draw_path(gain_variance, rng);
            paths.push(g, phi, psi);
        }
        paths
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn tx_angles(&self) -> &[f64] {
        &self.angles[..self.len()]
    }

    pub fn rx_angles(&self) -> &[f64] {
        &self.angles[self.len()..]
    }

    /// `(gain, phi, psi)` of path `l`.
    pub fn path(&self, l: usize) -> (Complex64, f64, f64) {
        (self.gains[l], self.angles[l], self.angles[self.len() + l])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Complex64, f64, f64)> + '_ {
        (0..self.len()).map(|l| self.path(l))
    }

    pub fn push(&mut self, gain: Complex64, phi: f64, psi: f64) {
        let l = self.len();
        self.gains.push(gain);
        self.angles.insert(l, wrap_angle(phi));
        self.angles.push(wrap_angle(psi));
    }

    pub fn remove(&mut self, l: usize) {
        let len = self.len();
        self.angles.remove(len + l);
        self.angles.remove(l);
        self.gains.remove(l);
    }

    /// Same paths with every gain replaced.
    pub fn with_gains(&self, gains: Vec<Complex64>) -> Result<Self> {
        PathSet::new(gains, self.angles.clone())
    }

    /// Plain-text record, one path per line: `Re(gain) Im(gain) phi psi`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (g, phi, psi) in self.iter() {
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e} {:.17e}", g.re, g.im, phi, psi);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut paths = PathSet::empty();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: i + 1, message: format!("{e}") })?;
            let [re, im, phi, psi] = fields[..] else {
                return Err(Error::Parse { line: i + 1, message: format!("expected 4 fields, got {}", fields.len()) });
            };
            if ![re, im, phi, psi].iter().all(|v| v.is_finite()) {
                return Err(Error::Parse { line: i + 1, message: "non-finite value".into() });
            }
            paths.push(Complex64::new(re, im), phi, psi);
        }
        Ok(paths)
    }
}

fn draw_path(gain_variance: f64, rng: &mut RngState) -> (Complex64, f64, f64) {
    let g = rng.complex_gaussian(gain_variance);
    let phi = rng.uniform_open(0.0, PI);
    let psi = rng.uniform_open(0.0, PI);
    (g, phi, psi)
}

/// `H = sum_l gain_l * e_r(psi_l) * e_t(phi_l)^H`, an `n_r x n_t` matrix.
pub fn assemble_channel(paths: &PathSet, geom: &ArrayGeometry) -> CMatrix {
    let mut h = CMatrix::zeros(geom.n_r, geom.n_t);
    for (g, phi, psi) in paths.iter() {
        let et = steering_vector_tx(phi, geom.n_t);
        let er = steering_vector_rx(psi, geom.n_r);
        h += (er * et.adjoint()) * g;
    }
    h
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DynamicsConfig {
    /// Per-slot standard deviation of each angle increment (radians).
    pub sigma_u: f64,
    /// Path arrivals per second.
    pub arrival_rate: f64,
    /// Departures per second, per path.
    pub departure_rate: f64,
    /// Seconds.
    pub slot_duration: f64,
    /// Variance of a newborn path's gain.
    pub gain_variance: f64,
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.sigma_u, self.arrival_rate, self.departure_rate, self.slot_duration, self.gain_variance]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !finite || self.slot_duration <= 0.0 {
            return Err(Error::invalid(format!("bad dynamics {self:?}")));
        }
        if self.arrival_probability() >= 1.0 || self.departure_probability() >= 1.0 {
            return Err(Error::invalid("per-slot arrival/departure probabilities must be below 1"));
        }
        Ok(())
    }

    pub fn arrival_probability(&self) -> f64 {
        self.arrival_rate * self.slot_duration
    }

    pub fn departure_probability(&self) -> f64 {
        self.departure_rate * self.slot_duration
    }

    /// Mean path lifetime in slots.
    pub fn mean_lifetime_slots(&self) -> f64 {
        1.0 / self.departure_probability()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotEvolution {
    pub paths: PathSet,
    pub arrivals: usize,
    pub departures: usize,
}

impl SlotEvolution {
    /// True iff a path arrived or departed during this slot.
    pub fn abrupt_change(&self) -> bool {
        self.arrivals + self.departures > 0
    }
}

/// Advances the channel by one slot.
///
/// Each existing path departs with probability `mu * dt`; survivors' angles
/// take an i.i.d. N(0, sigma_u^2) step and are reflected into `[0, pi]`; then
/// one new path arrives with probability `lambda * dt`. Gains never change.
pub fn evolve_slot(paths: &PathSet, cfg: &DynamicsConfig, rng: &mut RngState) -> SlotEvolution {
    let p_depart = cfg.departure_probability();
    let mut next = PathSet::empty();
    let mut departures = 0;
    for (g, phi, psi) in paths.iter() {
        if rng.bernoulli(p_depart) {
            departures += 1;
            continue;
        }
        let dphi = cfg.sigma_u * rng.standard_normal();
        let dpsi = cfg.sigma_u * rng.standard_normal();
        next.push(g, phi + dphi, psi + dpsi);
    }
    let mut arrivals = 0;
    if rng.bernoulli(cfg.arrival_probability()) {
        let (g, phi, psi) = draw_path(cfg.gain_variance, rng);
        next.push(g, phi, psi);
        arrivals = 1;
    }
    SlotEvolution { paths: next, arrivals, departures }
}

/// One random-walk step with a general `2L x 2L` angle covariance.
pub fn perturb_angles(paths: &PathSet, covariance: &DMatrix<f64>, rng: &mut RngState) -> Result<PathSet> {
    let n = paths.angles().len();
    if covariance.shape() != (n, n) {
        return Err(Error::invalid(format!("covariance is {:?}, expected ({n}, {n})", covariance.shape())));
    }
    if n == 0 {
        return Ok(paths.clone());
    }
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("angle covariance is not positive definite"))?;
    let z = nalgebra::DVector::from_fn(n, |_, _| rng.standard_normal());
    let u = chol.l() * z;
    let angles = paths.angles().iter().zip(u.iter()).map(|(a, d)| a + d).collect();
    PathSet::new(paths.gains().to_vec(), angles)
}
