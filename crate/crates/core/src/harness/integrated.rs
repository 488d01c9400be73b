//! The closed loop: acquire, track, test for abrupt changes, re-acquire.

use crate::acquisition::{acquire, sic_starting_point, SicConfig};
use crate::channel::{assemble_channel, evolve_slot, PathSet};
use crate::detection::{decide, DetectorConfig};
use crate::numerics::RngState;
use crate::sounding::{design_grid, sound_channel};
use crate::tracking::{tracker_init, tracker_init_from_paths, tracker_step, TrackerState};
use crate::{CMatrix, Result};

use super::config::{Arm, ExperimentConfig};
use super::metrics::{nmse_db, noise_variance_for_snr, spectral_efficiency, NMSE_FLOOR_DB};

pub(crate) const INTEGRATED_TAG: u64 = 100;

/// NMSE and spectral efficiency of one arm in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSlot {
    /// NaN when the true channel has no paths.
    pub nmse_db: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub true_paths: usize,
    pub arrivals: usize,
    pub departures: usize,
    /// A path arrived or departed going into this slot.
    pub true_change: bool,
    /// Slot 0 is acquired unconditionally and not tested.
    pub tested: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub declared: bool,
    /// Acquisition ran on this slot's pilots.
    pub acquired: bool,
    /// The system holds no estimate although the channel has paths.
    pub outage: bool,
    pub estimated_paths: usize,
    /// One entry per arm of the run, same order as [`IntegratedRun::arms`].
    pub arms: Vec<ArmSlot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerLogEntry {
    pub slot: usize,
    pub path: usize,
    pub phi: f64,
    pub psi: f64,
    pub var_phi: f64,
    pub var_psi: f64,
    pub gain_re: f64,
    pub gain_im: f64,
    pub nis: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionSummary {
    pub slots: usize,
    pub true_changes: usize,
    pub detected: usize,
    pub missed: usize,
    pub false_alarms: usize,
    /// Tested slots without a true change.
    pub h0_slots: usize,
    pub acquisitions: usize,
    pub outages: usize,
}

impl DetectionSummary {
    pub fn from_records(records: &[SlotRecord]) -> Self {
        let mut s = DetectionSummary { slots: records.len(), ..Default::default() };
        for r in records {
            s.acquisitions += r.acquired as usize;
            s.outages += r.outage as usize;
            if !r.tested {
                continue;
            }
            match (r.true_change, r.declared) {
                (true, true) => s.detected += 1,
                (true, false) => s.missed += 1,
                (false, true) => s.false_alarms += 1,
                (false, false) => {}
            }
            s.true_changes += r.true_change as usize;
            s.h0_slots += !r.true_change as usize;
        }
        s
    }

    pub fn false_alarm_rate(&self) -> f64 {
        self.false_alarms as f64 / self.h0_slots.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedRun {
    pub run: usize,
    pub arms: Vec<Arm>,
    pub records: Vec<SlotRecord>,
    pub tracker_log: Vec<TrackerLogEntry>,
    pub summary: DetectionSummary,
}

impl IntegratedRun {
    pub fn arm_index(&self, arm: Arm) -> Option<usize> {
        self.arms.iter().position(|&a| a == arm)
    }
}

/// Arms of an integrated run: `System` and `Ideal` always, plus whichever of
/// `Search`, `Lm` and `Kalman` the config asks for (all three by default).
pub fn integrated_arms(cfg: &ExperimentConfig) -> Vec<Arm> {
    let mut arms = cfg.arms_or(vec![Arm::Search, Arm::Lm, Arm::Kalman]);
    arms.retain(|a| matches!(a, Arm::Search | Arm::Lm | Arm::Kalman));
    arms.extend([Arm::System, Arm::Ideal]);
    arms.sort();
    arms
}

/// Runs `cfg.runs` independent integrated simulations of `cfg.slots` slots.
pub fn run_integrated(cfg: &ExperimentConfig) -> Result<Vec<IntegratedRun>> {
    cfg.validate()?;
    (0..cfg.runs).map(|run| run_integrated_once(cfg, run)).collect()
}

/// One integrated run; `run` selects the seed stream, so any run can be
/// reproduced in isolation.
///
/// Each slot the channel evolves and is sounded. Slot 0 is acquired. Every
/// later slot is tracked and then tested against the posterior estimate; a
/// declared change triggers acquisition on the same slot's pilots. Without
/// an estimate the test runs against the empty channel. The `Kalman` arm is
/// a genie tracker re-initialized from the true paths at every true change.
pub fn run_integrated_once(cfg: &ExperimentConfig, run: usize) -> Result<IntegratedRun> {
    cfg.validate()?;
    let geom = cfg.geometry();
    let grid = design_grid(cfg.m_t, cfg.m_r, &geom)?;
    let dynamics = cfg.dynamics();
    let var = noise_variance_for_snr(cfg.snr_db, &geom);
    let sic = SicConfig { max_paths: cfg.max_paths, gain_threshold: (10.0 * var).sqrt() };
    let mut detector = DetectorConfig::new(cfg.p_fa, cfg.m_t, cfg.m_r)?;
    if let Some(gamma) = cfg.threshold_override {
        detector = detector.with_threshold(gamma)?;
    }
    let arms = integrated_arms(cfg);

    let mut channel_rng = RngState::derive(cfg.seed, &[INTEGRATED_TAG, run as u64, 0]);
    let mut noise_rng = RngState::derive(cfg.seed, &[INTEGRATED_TAG, run as u64, 1]);

    let mut truth = PathSet::random(cfg.initial_paths, cfg.gain_variance(), &mut channel_rng);
    let mut tracker: Option<TrackerState> = None;
    let mut genie: Option<TrackerState> = None;
    let mut records = Vec::with_capacity(cfg.slots);
    let mut tracker_log = Vec::new();

    for slot in 0..cfg.slots {
        let (arrivals, departures) = if slot == 0 {
            (0, 0)
        } else {
            let ev = evolve_slot(&truth, &dynamics, &mut channel_rng);
            truth = ev.paths;
            (ev.arrivals, ev.departures)
        };
        let true_change = arrivals + departures > 0;
        let h = assemble_channel(&truth, &geom);
        let y = sound_channel(&h, &grid, var, &mut noise_rng)?;

        let acquire_now = |tracker: &mut Option<TrackerState>| -> Result<()> {
            let est = acquire(&y, &grid, &geom, &sic, &cfg.lm, cfg.gain_snr_floor_db)?;
            *tracker = if est.is_empty() { None } else { Some(tracker_init(&est, cfg.xi)?) };
            Ok(())
        };

        let (tested, acquired, decision) = if slot == 0 {
            acquire_now(&mut tracker)?;
            let estimate = tracker.as_ref().map(TrackerState::paths).unwrap_or_default();
            (false, true, decide(&y, &estimate, &detector, &grid, &geom)?)
        } else {
            if let Some(st) = &tracker {
                tracker = Some(tracker_step(st, &y, &grid, &geom)?);
            }
            let estimate = tracker.as_ref().map(TrackerState::paths).unwrap_or_default();
            let decision = decide(&y, &estimate, &detector, &grid, &geom)?;
            if decision.changed {
                acquire_now(&mut tracker)?;
            }
            (true, decision.changed, decision)
        };

        let system_paths = tracker.as_ref().map(TrackerState::paths).unwrap_or_default();
        let outage = system_paths.is_empty() && !truth.is_empty();
        if let Some(st) = &tracker {
            let l_count = st.path_count();
            for l in 0..l_count {
                tracker_log.push(TrackerLogEntry {
                    slot,
                    path: l,
                    phi: st.theta[l],
                    psi: st.theta[l_count + l],
                    var_phi: st.covariance[(l, l)],
                    var_psi: st.covariance[(l_count + l, l_count + l)],
                    gain_re: st.gains[l].re,
                    gain_im: st.gains[l].im,
                    nis: st.nis,
                });
            }
        }

        let mut arm_slots = Vec::with_capacity(arms.len());
        for &arm in &arms {
            let estimate: PathSet = match arm {
                Arm::System => system_paths.clone(),
                Arm::Ideal => truth.clone(),
                Arm::Search => sic_starting_point(&y, &grid, &geom, &sic)?.paths,
                Arm::Lm => acquire(&y, &grid, &geom, &sic, &cfg.lm, cfg.gain_snr_floor_db)?.paths,
                Arm::Kalman => {
                    genie = if truth.is_empty() {
                        None
                    } else {
                        match (&genie, slot == 0 || true_change) {
                            (Some(st), false) => Some(tracker_step(st, &y, &grid, &geom)?),
                            _ => Some(tracker_init_from_paths(&truth, cfg.xi)?),
                        }
                    };
                    genie.as_ref().map(TrackerState::paths).unwrap_or_default()
                }
                Arm::KalmanAcqError => unreachable!("not an integrated arm"),
            };
            arm_slots.push(score(&h, &assemble_channel(&estimate, &geom), var, arm == Arm::Ideal)?);
        }

        records.push(SlotRecord {
            slot,
            true_paths: truth.len(),
            arrivals,
            departures,
            true_change,
            tested,
            statistic: decision.statistic,
            threshold: decision.threshold,
            declared: tested && decision.changed,
            acquired,
            outage,
            estimated_paths: system_paths.len(),
            arms: arm_slots,
        });
    }

    let summary = DetectionSummary::from_records(&records);
    Ok(IntegratedRun { run, arms, records, tracker_log, summary })
}

fn score(h: &CMatrix, h_est: &CMatrix, var: f64, exact: bool) -> Result<ArmSlot> {
    let nmse = if h.norm() == 0.0 {
        f64::NAN
    } else if exact {
        NMSE_FLOOR_DB
    } else {
        nmse_db(h, h_est)?
    };
    Ok(ArmSlot { nmse_db: nmse, rate: spectral_efficiency(h, h_est, var)?.bits })
}
