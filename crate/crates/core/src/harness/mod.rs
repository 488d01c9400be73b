//! Experiment drivers, metrics and CSV output.

mod config;
mod integrated;
mod metrics;
mod output;
mod sweep;

pub use config::{Arm, ExperimentConfig, SweepKind};
pub use integrated::{
    integrated_arms, run_integrated, run_integrated_once, ArmSlot, DetectionSummary, IntegratedRun, SlotRecord,
    TrackerLogEntry,
};
pub use metrics::*;
pub use output::*;
pub use sweep::{calibrate_detector, run_sweep, ArmResult, Calibration, SweepPoint, SweepResult};
