//! Per-slot abrupt-change test.
//!
//! With a correct estimate the residual `y - Phi(theta) alpha` is pure noise,
//! so `2 L(y) = 2 ||y - Phi alpha||^2 / sigma_v^2` is chi-squared with
//! `2 m_r m_t` degrees of freedom. A change is declared when `L(y)` exceeds
//! half the chi-squared quantile at the target false-alarm probability.

use crate::channel::{ArrayGeometry, PathSet};
use crate::numerics::chi_squared_quantile;
use crate::sounding::{check_batch, predict_observation, ObservationBatch, PilotGrid};
use crate::tracking::TrackerState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub p_fa: f64,
    pub dof: u32,
    pub gamma: f64,
}

impl DetectorConfig {
    pub fn new(p_fa: f64, m_t: usize, m_r: usize) -> Result<Self> {
        let gamma = detector_threshold(p_fa, m_t, m_r)?;
        Ok(DetectorConfig { p_fa, dof: (2 * m_t * m_r) as u32, gamma })
    }

    /// Replaces the calibrated threshold, e.g. to absorb tracking error.
    pub fn with_threshold(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("threshold must be positive, got {gamma}")));
        }
        self.gamma = gamma;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionDecision {
    pub statistic: f64,
    pub threshold: f64,
    pub changed: bool,
}

/// `gamma = Q^-1_{chi^2(2 m_r m_t)}(p_fa) / 2`.
pub fn detector_threshold(p_fa: f64, m_t: usize, m_r: usize) -> Result<f64> {
    let dof = u32::try_from(2 * m_t * m_r).map_err(|_| Error::invalid("grid too large"))?;
    Ok(0.5 * chi_squared_quantile(p_fa, dof)?)
}

/// `L(y) = ||y - Phi(theta) alpha||^2 / sigma_v^2`.
pub fn change_statistic(y: &ObservationBatch, estimate: &PathSet, grid: &PilotGrid, geom: &ArrayGeometry) -> Result<f64> {
    check_batch(y, grid)?;
    if !(y.noise_variance > 0.0) {
        return Err(Error::invalid("change statistic needs a positive noise variance"));
    }
    let predicted = predict_observation(estimate, grid, geom)?;
    Ok((&y.y - predicted).norm_squared() / y.noise_variance)
}

/// Tests the current slot against the tracker's posterior estimate.
pub fn detect(
    y: &ObservationBatch,
    tracker: &TrackerState,
    cfg: &DetectorConfig,
    grid: &PilotGrid,
    geom: &ArrayGeometry,
) -> Result<DetectionDecision> {
    decide(y, &tracker.paths(), cfg, grid, geom)
}

/// [`detect`] for an arbitrary estimate (including an empty one).
pub fn decide(
    y: &ObservationBatch,
    estimate: &PathSet,
    cfg: &DetectorConfig,
    grid: &PilotGrid,
    geom: &ArrayGeometry,
) -> Result<DetectionDecision> {
    let statistic = change_statistic(y, estimate, grid, geom)?;
    Ok(DetectionDecision { statistic, threshold: cfg.gamma, changed: statistic > cfg.gamma })
}
