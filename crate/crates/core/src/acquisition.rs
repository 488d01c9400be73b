//! Channel acquisition from a single slot of pilots.
//!
//! The gains enter the observation linearly, so for fixed angles the best
//! gains are `pinv(Phi(theta)) y` and the angles alone minimize the
//! projection residual `r(theta) = (I - Phi Phi^+) y`. A matched-filter
//! successive interference canceller over the pilot grid supplies the
//! starting angles one path at a time; Levenberg-Marquardt on `[Re r; Im r]`
//! refines them after every new path.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{ArrayGeometry, PathSet};
use crate::numerics::{lm_minimize, pseudo_inverse, stack_real, LmConfig, DEFAULT_RANK_TOLERANCE};
use crate::sounding::{build_phi, check_batch, phi_derivatives, ObservationBatch, PilotGrid};
use crate::{CMatrix, CVector, Error, Result};

/// Column correlation above which two estimated paths count as one.
pub const COLLISION_CORRELATION: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub paths: PathSet,
    /// `||y - Phi(theta) gains||` at the returned estimate.
    pub residual_norm: f64,
    /// Paths removed because their gain-matrix columns collided.
    pub merged: usize,
    /// Paths removed by the SNR floor.
    pub pruned: usize,
}

impl ChannelEstimate {
    pub fn empty(residual_norm: f64) -> Self {
        ChannelEstimate { paths: PathSet::empty(), residual_norm, merged: 0, pruned: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Same text record as [`PathSet::to_text`].
    pub fn to_text(&self) -> String {
        self.paths.to_text()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SicConfig {
    pub max_paths: usize,
    /// Stop once a detected gain magnitude falls below this.
    pub gain_threshold: f64,
}

impl SicConfig {
    /// Five paths at most; threshold at the amplitude of a 10 dB path.
    pub fn for_noise(noise_variance: f64) -> Self {
        SicConfig { max_paths: 5, gain_threshold: (10.0 * noise_variance).sqrt() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_paths == 0 || !(self.gain_threshold >= 0.0) {
            return Err(Error::invalid(format!("bad SIC config {self:?}")));
        }
        Ok(())
    }
}

/// Starting point by successive interference cancellation.
///
/// Each round takes the largest-magnitude entry of the running residual,
/// snaps the path to that pilot's beam directions, estimates its gain with
/// the matched filter `h^H y / h^H h` and subtracts it. The round whose gain
/// magnitude falls below the threshold is discarded. A zero gain also stops
/// the search, since nothing is left to explain.
pub fn sic_starting_point(
    y: &ObservationBatch,
    grid: &PilotGrid,
    geom: &ArrayGeometry,
    cfg: &SicConfig,
) -> Result<ChannelEstimate> {
    check_batch(y, grid)?;
    cfg.validate()?;
    let mut residual = y.y.clone();
    let mut paths = PathSet::empty();
    while paths.len() < cfg.max_paths {
        let (idx, _) = residual
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best });
        let (p, q) = grid.pilot(idx);
        let (phi, psi) = (grid.tx_directions()[p], grid.rx_directions()[q]);
        let h = build_phi(&[phi, psi], grid, geom)?.column(0).into_owned();
        let energy = h.norm_squared();
        if energy == 0.0 {
            break;
        }
        let gain = h.dotc(&residual) / energy;
        if gain.norm() < cfg.gain_threshold || gain.norm() == 0.0 {
            break;
        }
        residual -= &h * gain;
        paths.push(gain, phi, psi);
    }
    Ok(ChannelEstimate { paths, residual_norm: residual.norm(), merged: 0, pruned: 0 })
}

/// Pseudo-inverse projection at fixed angles.
struct Projection {
    phi: CMatrix,
    pinv: CMatrix,
    gains: CVector,
    residual: CVector,
}

impl Projection {
    fn new(theta: &[f64], y: &CVector, grid: &PilotGrid, geom: &ArrayGeometry) -> Result<Self> {
        let phi = build_phi(theta, grid, geom)?;
        let pinv = pseudo_inverse(&phi, DEFAULT_RANK_TOLERANCE)?;
        let gains = &pinv * y;
        let residual = y - &phi * &gains;
        Ok(Projection { phi, pinv, gains, residual })
    }

    /// Derivative of the residual along one angle whose gain-matrix column
    /// `l` moves with `d` (all other columns fixed):
    ///
    /// `dr = -(dPhi Phi^+ + Phi dPhi^+) y` with
    /// `dPhi^+ = -Phi^+ dPhi Phi^+ + Phi^+ Phi^+^H dPhi^H (I - Phi Phi^+)
    ///           + (I - Phi^+ Phi) dPhi^H Phi^+^H Phi^+`.
    ///
    /// With `dPhi = d e_l^T` every term collapses to vector operations.
    fn residual_derivative(&self, l: usize, d: &CVector) -> CVector {
        let alpha_l = self.gains[l];
        // term 1 and the first pseudo-inverse term: -(I - Phi Phi^+) d alpha_l
        let proj_d = &self.phi * (&self.pinv * d);
        let mut dr = (proj_d - d) * alpha_l;
        // second term: -Phi Phi^+ Phi^+^H e_l (d^H r)
        let d_r = d.dotc(&self.residual);
        let pinv_row = self.pinv.row(l).adjoint();
        dr -= &self.phi * (&self.pinv * pinv_row) * d_r;
        // third term: -Phi (I - Phi^+ Phi) e_l (d^H Phi^+^H alpha). Zero up to
        // rounding for any Phi (Phi Phi^+ Phi = Phi), kept for rank-deficient Phi.
        let d_pa = d.dotc(&(self.pinv.adjoint() * &self.gains));
        let phi_col = self.phi.column(l).into_owned();
        let leak = &phi_col - &self.phi * (&self.pinv * &phi_col);
        dr -= leak * d_pa;
        dr
    }

    fn jacobian(&self, theta: &[f64], grid: &PilotGrid, geom: &ArrayGeometry) -> Result<DMatrix<f64>> {
        let l_count = theta.len() / 2;
        let (d_phi, d_psi) = phi_derivatives(theta, grid, geom)?;
        let rows = self.residual.len();
        let mut jac = DMatrix::<f64>::zeros(2 * rows, 2 * l_count);
        for l in 0..l_count {
            for (col, d) in [(l, d_phi.column(l)), (l_count + l, d_psi.column(l))] {
                let dr = self.residual_derivative(l, &d.into_owned());
                for i in 0..rows {
                    jac[(i, col)] = dr[i].re;
                    jac[(rows + i, col)] = dr[i].im;
                }
            }
        }
        Ok(jac)
    }
}

/// Indices `(i, j)`, `i < j`, of the first pair of columns whose normalized
/// correlation exceeds [`COLLISION_CORRELATION`].
fn first_collision(phi: &CMatrix) -> Option<(usize, usize, f64)> {
    let norms: Vec<f64> = phi.column_iter().map(|c| c.norm()).collect();
    for i in 0..phi.ncols() {
        for j in i + 1..phi.ncols() {
            let den = norms[i] * norms[j];
            if den == 0.0 {
                return Some((i, j, 1.0));
            }
            let corr = phi.column(i).dotc(&phi.column(j)).norm() / den;
            if corr > COLLISION_CORRELATION {
                return Some((i, j, corr));
            }
        }
    }
    None
}

/// `r(theta) = (I - Phi(theta) Phi(theta)^+) y`.
///
/// Fails with [`Error::RankDeficient`] when two paths' columns collide.
pub fn projection_residual(
    theta: &[f64],
    y: &ObservationBatch,
    grid: &PilotGrid,
    geom: &ArrayGeometry,
) -> Result<CVector> {
    check_batch(y, grid)?;
    let proj = Projection::new(theta, &y.y, grid, geom)?;
    if let Some((first, second, correlation)) = first_collision(&proj.phi) {
        return Err(Error::RankDeficient { first, second, correlation });
    }
    Ok(proj.residual)
}

/// Real-stacked Jacobian `[Re J; Im J]` of [`projection_residual`]; column
/// `l` is the derivative along `phi_l`, column `L + l` along `psi_l`.
pub fn residual_jacobian(
    theta: &[f64],
    y: &ObservationBatch,
    grid: &PilotGrid,
    geom: &ArrayGeometry,
) -> Result<DMatrix<f64>> {
    check_batch(y, grid)?;
    let proj = Projection::new(theta, &y.y, grid, geom)?;
    if let Some((first, second, correlation)) = first_collision(&proj.phi) {
        return Err(Error::RankDeficient { first, second, correlation });
    }
    proj.jacobian(theta, grid, geom)
}

/// Drops the later path of every colliding pair. Returns the surviving
/// angles and how many paths were dropped.
fn merge_collisions(theta: &[f64], grid: &PilotGrid, geom: &ArrayGeometry) -> Result<(Vec<f64>, usize)> {
    let mut paths = split_paths(theta);
    let mut merged = 0;
    loop {
        let flat = flatten(&paths);
        let phi = build_phi(&flat, grid, geom)?;
        match first_collision(&phi) {
            Some((_, j, _)) => {
                paths.remove(j);
                merged += 1;
            }
            None => return Ok((flat, merged)),
        }
    }
}

fn split_paths(theta: &[f64]) -> Vec<(f64, f64)> {
    let l = theta.len() / 2;
    (0..l).map(|i| (theta[i], theta[l + i])).collect()
}

fn flatten(paths: &[(f64, f64)]) -> Vec<f64> {
    paths.iter().map(|p| p.0).chain(paths.iter().map(|p| p.1)).collect()
}

/// Least-squares gains at fixed angles, plus the fit residual norm.
pub fn solve_gains(theta: &[f64], y: &CVector, grid: &PilotGrid, geom: &ArrayGeometry) -> Result<(CVector, f64)> {
    let proj = Projection::new(theta, y, grid, geom)?;
    Ok((proj.gains, proj.residual.norm()))
}

/// LM refinement of the angles from `theta0`. Returns the refined angles
/// and the projection-residual norm there, which never exceeds the norm at
/// `theta0`.
pub fn refine_angles(
    theta0: &[f64],
    y: &ObservationBatch,
    grid: &PilotGrid,
    geom: &ArrayGeometry,
    lm_cfg: &LmConfig,
) -> Result<(Vec<f64>, f64)> {
    check_batch(y, grid)?;
    let rows = 2 * y.y.len();
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        match Projection::new(x.as_slice(), &y.y, grid, geom) {
            Ok(p) => stack_real(&p.residual),
            Err(_) => DVector::from_element(rows, f64::NAN),
        }
    };
    let jacobian = |x: &DVector<f64>| -> DMatrix<f64> {
        Projection::new(x.as_slice(), &y.y, grid, geom)
            .and_then(|p| p.jacobian(x.as_slice(), grid, geom))
            .unwrap_or_else(|_| DMatrix::from_element(rows, x.len(), f64::NAN))
    };
    let x0 = DVector::from_column_slice(theta0);
    match lm_minimize(residual, jacobian, &x0, lm_cfg) {
        Ok(out) => Ok((out.params.iter().copied().collect(), out.residual_norm)),
        Err(Error::Convergence { best_params, best_residual_norm, .. }) => Ok((best_params, best_residual_norm)),
        Err(e) => Err(e),
    }
}

/// Full acquisition.
///
/// Paths are added one at a time. Each round places a new path on the grid
/// pilot with the largest projection residual, exactly as the interference
/// canceller would, and then LM refines the angles of all paths found so
/// far. A round is discarded, and the search ends, when any refined
/// least-squares gain falls below `sic_cfg.gain_threshold` or the new path
/// collides with an existing one. At most `sic_cfg.max_paths` paths are
/// kept. Finally paths whose SNR
/// `|gain|^2 / noise_variance` is below `gain_snr_floor_db` are removed and
/// the survivors' gains re-solved.
pub fn acquire(
    y: &ObservationBatch,
    grid: &PilotGrid,
    geom: &ArrayGeometry,
    sic_cfg: &SicConfig,
    lm_cfg: &LmConfig,
    gain_snr_floor_db: f64,
) -> Result<ChannelEstimate> {
    check_batch(y, grid)?;
    sic_cfg.validate()?;
    lm_cfg.validate()?;

    let mut theta: Vec<f64> = Vec::new();
    let mut residual = y.y.clone();
    let mut merged = 0;
    while theta.len() / 2 < sic_cfg.max_paths {
        let next = SicConfig { max_paths: 1, gain_threshold: 0.0 };
        let peak = sic_starting_point(&ObservationBatch { y: residual.clone(), noise_variance: y.noise_variance }, grid, geom, &next)?;
        if peak.is_empty() {
            break;
        }
        let (_, phi, psi) = peak.paths.path(0);
        let mut candidate = split_paths(&theta);
        candidate.push((phi, psi));
        let start = flatten(&candidate);
        if first_collision(&build_phi(&start, grid, geom)?).is_some() {
            merged += 1;
            break;
        }
        let (refined, _) = refine_angles(&start, y, grid, geom, lm_cfg)?;
        let (refined, collided) = merge_collisions(&refined, grid, geom)?;
        if collided > 0 {
            merged += collided;
            break;
        }
        let proj = Projection::new(&refined, &y.y, grid, geom)?;
        if proj.gains.iter().any(|g| g.norm() < sic_cfg.gain_threshold) {
            break;
        }
        theta = refined;
        residual = proj.residual;
    }
    if theta.is_empty() {
        return Ok(ChannelEstimate { merged, ..ChannelEstimate::empty(y.y.norm()) });
    }

    let (gains, _) = solve_gains(&theta, &y.y, grid, geom)?;
    let floor = 10f64.powf(gain_snr_floor_db / 10.0) * y.noise_variance;
    let paths = split_paths(&theta);
    let kept: Vec<(f64, f64)> = paths.iter().zip(gains.iter()).filter(|(_, g)| g.norm_sqr() >= floor).map(|(p, _)| *p).collect();
    let pruned = paths.len() - kept.len();
    let kept_theta = flatten(&kept);
    let (gains, residual_norm) = solve_gains(&kept_theta, &y.y, grid, geom)?;
    let paths = PathSet::new(gains.iter().copied().collect::<Vec<Complex64>>(), kept_theta)?;
    Ok(ChannelEstimate { paths, residual_norm, merged, pruned })
}
