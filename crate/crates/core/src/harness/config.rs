use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, DynamicsConfig};
use crate::numerics::LmConfig;
use crate::{Error, Result};

/// Estimation schemes compared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Grid search by successive interference cancellation, every slot.
    Search,
    /// Full LM acquisition, every slot.
    Lm,
    /// Kalman tracking started from the true channel.
    Kalman,
    /// Kalman tracking started from the true angles and perturbed gains.
    KalmanAcqError,
    /// Acquisition, tracking and change detection together.
    System,
    /// The true channel.
    Ideal,
}

impl Arm {
    pub const ALL: [Arm; 6] = [Arm::Search, Arm::Lm, Arm::Kalman, Arm::KalmanAcqError, Arm::System, Arm::Ideal];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Search => "search",
            Arm::Lm => "lm",
            Arm::Kalman => "kalman",
            Arm::KalmanAcqError => "kalman-acq-error",
            Arm::System => "system",
            Arm::Ideal => "ideal",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown arm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    AcqVsSnr,
    AcqVsGrid,
    TrackVsSnr,
    TrackVsGrid,
    TrackVsSigma,
}

impl SweepKind {
    pub const ALL: [SweepKind; 5] =
        [SweepKind::AcqVsSnr, SweepKind::AcqVsGrid, SweepKind::TrackVsSnr, SweepKind::TrackVsGrid, SweepKind::TrackVsSigma];

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::AcqVsSnr => "acq_vs_snr",
            SweepKind::AcqVsGrid => "acq_vs_grid",
            SweepKind::TrackVsSnr => "track_vs_snr",
            SweepKind::TrackVsGrid => "track_vs_grid",
            SweepKind::TrackVsSigma => "track_vs_sigma",
        }
    }

    pub fn is_tracking(self) -> bool {
        matches!(self, SweepKind::TrackVsSnr | SweepKind::TrackVsGrid | SweepKind::TrackVsSigma)
    }

    /// Name of the swept variable, used as the CSV column header.
    pub fn variable(self) -> &'static str {
        match self {
            SweepKind::AcqVsSnr | SweepKind::TrackVsSnr => "snr_db",
            SweepKind::AcqVsGrid | SweepKind::TrackVsGrid => "grid_size",
            SweepKind::TrackVsSigma => "sigma_u_sq",
        }
    }

    /// Arms run when the config does not narrow them down.
    pub fn default_arms(self) -> Vec<Arm> {
        if self.is_tracking() {
            vec![Arm::Search, Arm::Lm, Arm::Kalman, Arm::KalmanAcqError]
        } else {
            vec![Arm::Search, Arm::Lm]
        }
    }

    pub(crate) fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep '{s}'")))
    }
}

/// Everything an experiment depends on. Defaults reproduce the reference
/// setup: 16 x 16 arrays and pilot grid, 20 dB, 3 paths, 0.1 ms slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,

    pub n_t: usize,
    pub n_r: usize,
    pub m_t: usize,
    pub m_r: usize,

    /// Operating SNR for experiments that do not sweep it.
    pub snr_db: f64,
    pub snr_grid_db: Vec<f64>,
    /// Grid sizes swept by the `*_vs_grid` experiments (`m_t = m_r`).
    pub grid_sizes: Vec<usize>,
    /// Per-slot angle-walk standard deviation (radians).
    pub sigma_u: f64,
    /// Angle-walk variances swept by `track_vs_sigma` (radians^2).
    pub sigma_u_sq_grid: Vec<f64>,

    pub arrival_rate: f64,
    pub departure_rate: f64,
    pub slot_duration: f64,
    pub symbol_rate: f64,

    pub initial_paths: usize,
    pub trials: usize,
    pub blocks: usize,
    pub slots_per_block: usize,
    pub runs: usize,
    pub slots: usize,
    pub calibration_slots: usize,

    pub p_fa: f64,
    /// Overrides the calibrated detection threshold when set.
    pub threshold_override: Option<f64>,
    /// Assumed per-angle walk variance inside the Kalman filter.
    pub xi: f64,
    pub max_paths: usize,
    pub gain_snr_floor_db: f64,
    pub lm: LmConfig,

    /// Arms to run; empty means the experiment's default set.
    pub arms: Vec<Arm>,
    /// Worker threads; 0 lets the pool decide. Output does not depend on it.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let deg = PI / 180.0;
        ExperimentConfig {
            seed: 2016,
            out_dir: PathBuf::from("out"),
            n_t: 16,
            n_r: 16,
            m_t: 16,
            m_r: 16,
            snr_db: 20.0,
            snr_grid_db: vec![0.0, 10.0, 20.0, 30.0],
            grid_sizes: vec![8, 12, 16, 20, 24],
            sigma_u: 0.5 * deg,
            sigma_u_sq_grid: [0.5, 1.0, 2.0, 3.5].iter().map(|v| v * deg * deg).collect(),
            arrival_rate: 500.0,
            departure_rate: 200.0,
            slot_duration: 1e-4,
            symbol_rate: 20e6,
            initial_paths: 3,
            trials: 200,
            blocks: 200,
            slots_per_block: 50,
            runs: 1,
            slots: 200,
            calibration_slots: 10_000,
            p_fa: 0.05,
            threshold_override: None,
            xi: (2.0 * deg) * (2.0 * deg),
            max_paths: 5,
            gain_snr_floor_db: 10.0,
            lm: LmConfig::default(),
            arms: Vec::new(),
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_t", self.n_t),
            ("n_r", self.n_r),
            ("m_t", self.m_t),
            ("m_r", self.m_r),
            ("trials", self.trials),
            ("blocks", self.blocks),
            ("slots_per_block", self.slots_per_block),
            ("runs", self.runs),
            ("slots", self.slots),
            ("calibration_slots", self.calibration_slots),
            ("max_paths", self.max_paths),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.snr_grid_db.is_empty() || self.grid_sizes.is_empty() || self.sigma_u_sq_grid.is_empty() {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        if self.grid_sizes.contains(&0) || self.sigma_u_sq_grid.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("grid sizes must be >= 1 and variances >= 0".into()));
        }
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(Error::Config(format!("p_fa {} outside (0, 1)", self.p_fa)));
        }
        if !(self.xi >= 0.0) || !(self.sigma_u >= 0.0) {
            return Err(Error::Config("xi and sigma_u must be non-negative".into()));
        }
        self.lm.validate()?;
        self.dynamics().validate()
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry { n_t: self.n_t, n_r: self.n_r }
    }

    /// Variance of a newborn path's gain, `n_t n_r`.
    pub fn gain_variance(&self) -> f64 {
        (self.n_t * self.n_r) as f64
    }

    pub fn dynamics(&self) -> DynamicsConfig {
        DynamicsConfig {
            sigma_u: self.sigma_u,
            arrival_rate: self.arrival_rate,
            departure_rate: self.departure_rate,
            slot_duration: self.slot_duration,
            gain_variance: self.gain_variance(),
        }
    }

    pub fn arms_or(&self, defaults: Vec<Arm>) -> Vec<Arm> {
        if self.arms.is_empty() {
            defaults
        } else {
            let mut arms = self.arms.clone();
            arms.sort();
            arms.dedup();
            arms
        }
    }
}
