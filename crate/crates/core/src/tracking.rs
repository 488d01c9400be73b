//! Extended Kalman filter on the angle vector, gains held fixed.
//!
//! State model: `theta(n) = theta(n-1) + u(n)`, `u ~ N(0, Q_u)`. The
//! observation `y = Phi(theta) alpha + v` is linearized around the prediction
//! and split into real and imaginary halves, so the measurement noise is
//! `(sigma_v^2 / 2) I` on `2 m_r m_t` real components.
//!
//! The gain `M C^T (R + C M C^T)^-1` is evaluated through the push-through
//! identity `M (I + C^T R^-1 C M)^-1 C^T R^-1`, which only needs a `2L x 2L`
//! solve instead of one the size of the observation. The covariance update
//! uses the Joseph form.

use nalgebra::{DMatrix, DVector};

use crate::acquisition::ChannelEstimate;
use crate::channel::{wrap_angle, ArrayGeometry, PathSet};
use crate::numerics::{stack_real, stack_real_matrix};
use crate::sounding::{build_phi, check_batch, phi_derivatives, ObservationBatch, PilotGrid};
use crate::{CVector, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    /// Posterior angle estimate `theta(n|n)`.
    pub theta: DVector<f64>,
    /// Posterior error covariance `M(n|n)`.
    pub covariance: DMatrix<f64>,
    pub gains: CVector,
    /// Assumed angle-walk covariance `Q_u`.
    pub process_noise: DMatrix<f64>,
    /// Euclidean norm of the last real-stacked innovation.
    pub innovation_norm: f64,
    /// Normalized innovation squared of the last step.
    pub nis: f64,
    /// Steps taken since initialization.
    pub steps: usize,
}

impl TrackerState {
    pub fn path_count(&self) -> usize {
        self.gains.len()
    }

    pub fn paths(&self) -> PathSet {
        PathSet::new(self.gains.iter().copied().collect(), self.theta.iter().copied().collect())
            .expect("tracker keeps consistent dimensions")
    }
}

/// Starts a tracker at an acquisition estimate with `M = 0` and `Q_u = xi I`.
pub fn tracker_init(estimate: &ChannelEstimate, xi: f64) -> Result<TrackerState> {
    tracker_init_from_paths(&estimate.paths, xi)
}

pub fn tracker_init_from_paths(paths: &PathSet, xi: f64) -> Result<TrackerState> {
    if paths.is_empty() {
        return Err(Error::invalid("cannot track an empty estimate"));
    }
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(Error::invalid(format!("xi must be finite and non-negative, got {xi}")));
    }
    let n = paths.angles().len();
    Ok(TrackerState {
        theta: DVector::from_column_slice(paths.angles()),
        covariance: DMatrix::zeros(n, n),
        gains: CVector::from_column_slice(paths.gains()),
        process_noise: DMatrix::identity(n, n) * xi,
        innovation_norm: 0.0,
        nis: 0.0,
        steps: 0,
    })
}

#[derive(Debug, Clone)]
pub struct Linearization {
    /// Real-stacked sensitivity `[Re C; Im C]`, `2 m_r m_t x 2L`.
    pub sensitivity: DMatrix<f64>,
    /// `Phi(theta) alpha` at the linearization point.
    pub predicted: CVector,
}

/// Linearizes `Phi(theta) alpha` at the tracker's angle estimate. Column `l`
/// of the complex sensitivity is `(dPhi / dphi_l) alpha`, column `L + l` the
/// same for `psi_l`.
pub fn linearize_observation(state: &TrackerState, grid: &PilotGrid, geom: &ArrayGeometry) -> Result<Linearization> {
    let theta = state.theta.as_slice();
    let l_count = state.path_count();
    let phi = build_phi(theta, grid, geom)?;
    let (d_phi, d_psi) = phi_derivatives(theta, grid, geom)?;
    let predicted = &phi * &state.gains;
    let mut c = crate::CMatrix::zeros(grid.pilots(), 2 * l_count);
    for l in 0..l_count {
        let g = state.gains[l];
        c.set_column(l, &(d_phi.column(l) * g));
        c.set_column(l_count + l, &(d_psi.column(l) * g));
    }
    Ok(Linearization { sensitivity: stack_real_matrix(&c), predicted })
}

/// One predict/correct cycle on the observation `y`.
pub fn tracker_step(state: &TrackerState, y: &ObservationBatch, grid: &PilotGrid, geom: &ArrayGeometry) -> Result<TrackerState> {
    check_batch(y, grid)?;
    let n = state.theta.len();

    // Prediction: theta(n|n-1) = theta(n-1|n-1), M(n|n-1) = M(n-1|n-1) + Q_u.
    let prior = &state.covariance + &state.process_noise;
    let lin = linearize_observation(state, grid, geom)?;
    let c = &lin.sensitivity;
    let r = 0.5 * y.noise_variance;

    // K = M C^T (R + C M C^T)^-1 = M (r I + C^T C M)^-1 C^T.
    let ctc = c.transpose() * c;
    let inner = DMatrix::identity(n, n) * r + &ctc * &prior;
    let lu = inner.lu();
    let solved = lu
        .solve(&c.transpose())
        .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
    let gain = &prior * solved;
    if gain.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Kalman gain".into()));
    }

    let innovation = stack_real(&y.y) - stack_real(&lin.predicted);
    let correction = &gain * &innovation;
    let theta = (&state.theta + correction).map(wrap_angle);

    // Joseph form: (I - K C) M (I - K C)^T + K R K^T.
    let ikc = DMatrix::identity(n, n) - &gain * c;
    let mut posterior = &ikc * &prior * ikc.transpose() + (&gain * gain.transpose()) * r;
    posterior = (&posterior + posterior.transpose()) * 0.5;

    // S^-1 nu = (nu - C K nu) / r, from K = M C^T S^-1.
    let nis = if r > 0.0 {
        let whitened = (&innovation - c * (&gain * &innovation)) / r;
        innovation.dot(&whitened)
    } else {
        f64::NAN
    };

    Ok(TrackerState {
        theta,
        covariance: posterior,
        gains: state.gains.clone(),
        process_noise: state.process_noise.clone(),
        innovation_norm: innovation.norm(),
        nis,
        steps: state.steps + 1,
    })
}
