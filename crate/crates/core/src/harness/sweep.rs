//! Monte Carlo sweeps of acquisition and tracking accuracy, and detector
//! calibration.
//!
//! Trial `k` of a sweep draws its channel from stream `[kind, k, 0]`, its
//! noise from `[kind, k, 1]` and the gain perturbation of the
//! acquisition-error arm from `[kind, k, 2]`, all derived from the master
//! seed. The point index is not part of the stream, so every grid point sees
//! the same channels (common random numbers).

use rayon::prelude::*;

use crate::acquisition::{acquire, sic_starting_point, SicConfig};
use crate::channel::{assemble_channel, evolve_slot, ArrayGeometry, DynamicsConfig, PathSet};
use crate::detection::{change_statistic, DetectorConfig};
use crate::numerics::RngState;
use crate::sounding::{design_grid, sound_channel, PilotGrid};
use crate::tracking::{tracker_init_from_paths, tracker_step, TrackerState};
use crate::Result;

use super::config::{Arm, ExperimentConfig, SweepKind};
use super::integrated::{run_integrated, DetectionSummary};
use super::metrics::{aggregate_nmse, nmse_ratio, noise_variance_for_snr, NmseAggregate};

const CALIBRATION_TAG: u64 = 200;

/// Per-trial NMSE ratios of one arm at one grid point. For tracking sweeps a
/// trial is a block and its ratio is the mean over the block's tracked slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: Arm,
    pub ratios: Vec<f64>,
    pub aggregate: NmseAggregate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub arms: Vec<ArmResult>,
}

impl SweepPoint {
    pub fn arm(&self, arm: Arm) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub arms: Vec<Arm>,
    pub points: Vec<SweepPoint>,
}

/// Setting of one grid point.
#[derive(Debug, Clone)]
struct PointSetup {
    geom: ArrayGeometry,
    grid: PilotGrid,
    noise_variance: f64,
    sigma_u: f64,
}

pub fn run_sweep(kind: SweepKind, cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let arms = sweep_arms(kind, cfg);
    let values: Vec<f64> = match kind {
        SweepKind::AcqVsSnr | SweepKind::TrackVsSnr => cfg.snr_grid_db.clone(),
        SweepKind::AcqVsGrid | SweepKind::TrackVsGrid => cfg.grid_sizes.iter().map(|&m| m as f64).collect(),
        SweepKind::TrackVsSigma => cfg.sigma_u_sq_grid.clone(),
    };
    let trials = if kind.is_tracking() { cfg.blocks } else { cfg.trials };
    let geom = cfg.geometry();

    let mut points = Vec::with_capacity(values.len());
    for &value in &values {
        let (m_t, m_r) = match kind {
            SweepKind::AcqVsGrid | SweepKind::TrackVsGrid => (value as usize, value as usize),
            _ => (cfg.m_t, cfg.m_r),
        };
        let snr = match kind {
            SweepKind::AcqVsSnr | SweepKind::TrackVsSnr => value,
            _ => cfg.snr_db,
        };
        let setup = PointSetup {
            geom,
            grid: design_grid(m_t, m_r, &geom)?,
            noise_variance: noise_variance_for_snr(snr, &geom),
            sigma_u: if kind == SweepKind::TrackVsSigma { value.sqrt() } else { cfg.sigma_u },
        };
        let per_trial: Vec<Vec<f64>> = in_pool(cfg, || {
            (0..trials)
                .into_par_iter()
                .map(|k| {
                    if kind.is_tracking() {
                        tracking_trial(kind, cfg, &setup, &arms, k)
                    } else {
                        acquisition_trial(kind, cfg, &setup, &arms, k)
                    }
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let arm_results = arms
            .iter()
            .enumerate()
            .map(|(i, &arm)| {
                let ratios: Vec<f64> = per_trial.iter().map(|t| t[i]).collect();
                let aggregate = aggregate_nmse(&ratios);
                ArmResult { arm, ratios, aggregate }
            })
            .collect();
        points.push(SweepPoint { value, arms: arm_results });
    }
    Ok(SweepResult { kind, arms, points })
}

fn sweep_arms(kind: SweepKind, cfg: &ExperimentConfig) -> Vec<Arm> {
    let allowed = kind.default_arms();
    let mut arms = cfg.arms_or(allowed.clone());
    arms.retain(|a| allowed.contains(a));
    arms
}

fn in_pool<T: Send>(cfg: &ExperimentConfig, f: impl FnOnce() -> T + Send) -> T {
    if cfg.threads == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn streams(kind: SweepKind, cfg: &ExperimentConfig, trial: usize) -> [RngState; 3] {
    let path = |s: u64| RngState::derive(cfg.seed, &[kind.tag(), trial as u64, s]);
    [path(0), path(1), path(2)]
}

fn sic_for(cfg: &ExperimentConfig, var: f64) -> SicConfig {
    SicConfig { max_paths: cfg.max_paths, gain_threshold: (10.0 * var).sqrt() }
}

fn acquisition_trial(kind: SweepKind, cfg: &ExperimentConfig, s: &PointSetup, arms: &[Arm], trial: usize) -> Result<Vec<f64>> {
    let [mut channel_rng, mut noise_rng, _] = streams(kind, cfg, trial);
    let truth = PathSet::random(cfg.initial_paths, cfg.gain_variance(), &mut channel_rng);
    let h = assemble_channel(&truth, &s.geom);
    let y = sound_channel(&h, &s.grid, s.noise_variance, &mut noise_rng)?;
    let sic = sic_for(cfg, s.noise_variance);
    arms.iter()
        .map(|arm| {
            let est = match arm {
                Arm::Search => sic_starting_point(&y, &s.grid, &s.geom, &sic)?.paths,
                Arm::Lm => acquire(&y, &s.grid, &s.geom, &sic, &cfg.lm, cfg.gain_snr_floor_db)?.paths,
                _ => unreachable!("filtered by sweep_arms"),
            };
            nmse_ratio(&h, &assemble_channel(&est, &s.geom))
        })
        .collect()
}

/// One block: `initial_paths` paths with fixed gains whose angles walk for
/// `slots_per_block` slots. Slot 0 initializes the Kalman arms (from the
/// truth, or from the truth with gains perturbed by CN(0, sigma_v^2)); NMSE
/// is averaged over slots `1..`.
fn tracking_trial(kind: SweepKind, cfg: &ExperimentConfig, s: &PointSetup, arms: &[Arm], trial: usize) -> Result<Vec<f64>> {
    let [mut channel_rng, mut noise_rng, mut perturb_rng] = streams(kind, cfg, trial);
    let dynamics = DynamicsConfig {
        sigma_u: s.sigma_u,
        arrival_rate: 0.0,
        departure_rate: 0.0,
        slot_duration: cfg.slot_duration,
        gain_variance: cfg.gain_variance(),
    };
    let sic = sic_for(cfg, s.noise_variance);
    let mut truth = PathSet::random(cfg.initial_paths, cfg.gain_variance(), &mut channel_rng);
    let perturbed = {
        let gains = truth.gains().iter().map(|g| g + perturb_rng.complex_gaussian(s.noise_variance)).collect();
        truth.with_gains(gains)?
    };
    let mut trackers: Vec<Option<TrackerState>> = arms
        .iter()
        .map(|arm| match arm {
            Arm::Kalman => tracker_init_from_paths(&truth, cfg.xi).map(Some),
            Arm::KalmanAcqError => tracker_init_from_paths(&perturbed, cfg.xi).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;
    // Slot 0 is sounded so that every slot index consumes the same noise.
    let _ = sound_channel(&assemble_channel(&truth, &s.geom), &s.grid, s.noise_variance, &mut noise_rng)?;

    let mut sums = vec![0.0; arms.len()];
    let tracked = cfg.slots_per_block.saturating_sub(1).max(1);
    for _ in 1..cfg.slots_per_block.max(2) {
        truth = evolve_slot(&truth, &dynamics, &mut channel_rng).paths;
        let h = assemble_channel(&truth, &s.geom);
        let y = sound_channel(&h, &s.grid, s.noise_variance, &mut noise_rng)?;
        for (i, arm) in arms.iter().enumerate() {
            let est = match arm {
                Arm::Search => sic_starting_point(&y, &s.grid, &s.geom, &sic)?.paths,
                Arm::Lm => acquire(&y, &s.grid, &s.geom, &sic, &cfg.lm, cfg.gain_snr_floor_db)?.paths,
                Arm::Kalman | Arm::KalmanAcqError => {
                    let st = trackers[i].as_ref().expect("initialized above");
                    let next = tracker_step(st, &y, &s.grid, &s.geom)?;
                    let paths = next.paths();
                    trackers[i] = Some(next);
                    paths
                }
                _ => unreachable!("filtered by sweep_arms"),
            };
            sums[i] += nmse_ratio(&h, &assemble_channel(&est, &s.geom))?;
        }
    }
    Ok(sums.into_iter().map(|v| v / tracked as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub p_fa: f64,
    pub threshold: f64,
    pub dof: u32,
    /// H0 slots tested against the true channel.
    pub ideal_slots: usize,
    pub ideal_alarms: usize,
    /// Integrated runs on a channel without arrivals or departures.
    pub tracked: DetectionSummary,
}

impl Calibration {
    pub fn ideal_rate(&self) -> f64 {
        self.ideal_alarms as f64 / self.ideal_slots as f64
    }

    /// Binomial standard error of the ideal rate at the nominal `p_fa`.
    pub fn standard_error(&self) -> f64 {
        (self.p_fa * (1.0 - self.p_fa) / self.ideal_slots as f64).sqrt()
    }
}

/// Empirical false-alarm rate of the threshold, first with the true channel
/// as the estimate (`calibration_slots` fresh channels), then through the
/// integrated loop on channels that only drift (`runs` x `slots`).
pub fn calibrate_detector(cfg: &ExperimentConfig) -> Result<Calibration> {
    cfg.validate()?;
    let geom = cfg.geometry();
    let grid = design_grid(cfg.m_t, cfg.m_r, &geom)?;
    let var = noise_variance_for_snr(cfg.snr_db, &geom);
    let mut detector = DetectorConfig::new(cfg.p_fa, cfg.m_t, cfg.m_r)?;
    if let Some(gamma) = cfg.threshold_override {
        detector = detector.with_threshold(gamma)?;
    }
    let alarms: Vec<bool> = in_pool(cfg, || {
        (0..cfg.calibration_slots)
            .into_par_iter()
            .map(|k| {
                let mut rng = RngState::derive(cfg.seed, &[CALIBRATION_TAG, k as u64]);
                let truth = PathSet::random(cfg.initial_paths, cfg.gain_variance(), &mut rng);
                let y = sound_channel(&assemble_channel(&truth, &geom), &grid, var, &mut rng)?;
                Ok(change_statistic(&y, &truth, &grid, &geom)? > detector.gamma)
            })
            .collect::<Result<Vec<bool>>>()
    })?;
    let static_cfg = ExperimentConfig {
        arrival_rate: 0.0,
        departure_rate: 0.0,
        arms: vec![Arm::System],
        ..cfg.clone()
    };
    let runs = run_integrated(&static_cfg)?;
    let mut tracked = DetectionSummary::default();
    for r in &runs {
        let s = r.summary;
        tracked.slots += s.slots;
        tracked.true_changes += s.true_changes;
        tracked.detected += s.detected;
        tracked.missed += s.missed;
        tracked.false_alarms += s.false_alarms;
        tracked.h0_slots += s.h0_slots;
        tracked.acquisitions += s.acquisitions;
        tracked.outages += s.outages;
    }
    Ok(Calibration {
        p_fa: cfg.p_fa,
        threshold: detector.gamma,
        dof: detector.dof,
        ideal_slots: cfg.calibration_slots,
        ideal_alarms: alarms.iter().filter(|&&a| a).count(),
        tracked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            trials: 3,
            blocks: 2,
            slots_per_block: 4,
            snr_grid_db: vec![10.0, 30.0],
            grid_sizes: vec![8, 16],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_trial_is_reproducible() {
        let cfg = ExperimentConfig { trials: 1, ..tiny() };
        let a = run_sweep(SweepKind::AcqVsSnr, &cfg).unwrap();
        let b = run_sweep(SweepKind::AcqVsSnr, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 2);
        assert_eq!(a.points[0].arms[0].ratios.len(), 1);
    }

    #[test]
    fn aggregate_recomputes_from_trials() {
        let r = run_sweep(SweepKind::TrackVsSnr, &tiny()).unwrap();
        assert_eq!(r.arms, vec![Arm::Search, Arm::Lm, Arm::Kalman, Arm::KalmanAcqError]);
        for p in &r.points {
            for a in &p.arms {
                assert_eq!(a.aggregate, aggregate_nmse(&a.ratios));
                assert_eq!(a.ratios.len(), 2);
            }
        }
    }

    #[test]
    fn trials_do_not_depend_on_thread_count() {
        let base = tiny();
        let one = run_sweep(SweepKind::AcqVsGrid, &ExperimentConfig { threads: 1, ..base.clone() }).unwrap();
        let three = run_sweep(SweepKind::AcqVsGrid, &ExperimentConfig { threads: 3, ..base }).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn arms_are_filtered_per_sweep() {
        let cfg = ExperimentConfig { arms: vec![Arm::Kalman, Arm::Search, Arm::System], ..tiny() };
        assert_eq!(sweep_arms(SweepKind::AcqVsSnr, &cfg), vec![Arm::Search]);
        assert_eq!(sweep_arms(SweepKind::TrackVsSigma, &cfg), vec![Arm::Search, Arm::Kalman]);
    }

    #[test]
    fn calibration_counts_add_up() {
        let cfg = ExperimentConfig { calibration_slots: 200, runs: 1, slots: 10, ..tiny() };
        let c = calibrate_detector(&cfg).unwrap();
        assert_eq!(c.ideal_slots, 200);
        assert!(c.ideal_alarms < 40);
        assert_eq!(c.tracked.true_changes, 0);
        assert_eq!(c.tracked.h0_slots, 9);
    }
}
