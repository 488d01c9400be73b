//! `mmwave-sim`: runs the Monte Carlo experiments and writes CSV files plus a
//! `manifest.toml` describing exactly how they were produced.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mmwave::harness::{
    calibrate_detector, run_integrated, run_sweep, write_calibration, write_integrated, write_manifest, write_sweep, Arm,
    ExperimentConfig, SweepKind,
};

#[derive(Parser)]
#[command(name = "mmwave-sim", version, about = "mm-wave channel acquisition, tracking and change detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// NMSE of search vs LM acquisition against SNR or grid size.
    AcquireSweep {
        /// acq_vs_snr or acq_vs_grid.
        #[arg(long, default_value = "acq_vs_snr")]
        sweep: SweepKind,
        #[command(flatten)]
        common: Common,
    },
    /// Tracking NMSE against SNR, grid size or angle-walk variance.
    TrackSweep {
        /// track_vs_snr, track_vs_grid or track_vs_sigma.
        #[arg(long, default_value = "track_vs_snr")]
        sweep: SweepKind,
        #[command(flatten)]
        common: Common,
    },
    /// Acquire, track and detect over a birth/death channel, slot by slot.
    Integrated {
        #[command(flatten)]
        common: Common,
    },
    /// Empirical false-alarm rate of the change detector.
    CalibrateDetector {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; unset fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Trials for acquisition sweeps, blocks for tracking sweeps, runs for
    /// `integrated`, H0 slots for `calibrate-detector`.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated arm names, e.g. `search,lm`.
    #[arg(long, value_delimiter = ',')]
    arms: Option<Vec<Arm>>,
}

enum Counted {
    Trials,
    Blocks,
    Runs,
    CalibrationSlots,
}

impl Common {
    fn load(&self, counted: Counted) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        if let Some(n) = self.trials {
            match counted {
                Counted::Trials => cfg.trials = n,
                Counted::Blocks => cfg.blocks = n,
                Counted::Runs => cfg.runs = n,
                Counted::CalibrationSlots => cfg.calibration_slots = n,
            }
        }
        if let Some(arms) = &self.arms {
            cfg.arms = arms.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn finish(dir: &Path, command: &str, cfg: &ExperimentConfig, files: Vec<PathBuf>) -> Result<()> {
    let manifest = write_manifest(dir, command, cfg, &files)?;
    for f in files.iter().chain([&manifest]) {
        println!("{}", f.display());
    }
    Ok(())
}

fn sweep(kind: SweepKind, tracking: bool, common: &Common, command: &str) -> Result<()> {
    if kind.is_tracking() != tracking {
        bail!("{} is not a {} sweep", kind.name(), if tracking { "tracking" } else { "acquisition" });
    }
    let cfg = common.load(if tracking { Counted::Blocks } else { Counted::Trials })?;
    let result = run_sweep(kind, &cfg)?;
    let files = write_sweep(&cfg.out_dir, &result, &cfg)?;
    finish(&cfg.out_dir, command, &cfg, files)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::AcquireSweep { sweep: kind, common } => sweep(kind, false, &common, "acquire-sweep"),
        Command::TrackSweep { sweep: kind, common } => sweep(kind, true, &common, "track-sweep"),
        Command::Integrated { common } => {
            let cfg = common.load(Counted::Runs)?;
            let runs = run_integrated(&cfg)?;
            for r in &runs {
                let s = &r.summary;
                eprintln!(
                    "run {}: {} true changes, {} detected, {} missed, {} false alarms in {} H0 slots",
                    r.run, s.true_changes, s.detected, s.missed, s.false_alarms, s.h0_slots
                );
            }
            let files = write_integrated(&cfg.out_dir, &runs, &cfg)?;
            finish(&cfg.out_dir, "integrated", &cfg, files)
        }
        Command::CalibrateDetector { common } => {
            let cfg = common.load(Counted::CalibrationSlots)?;
            let c = calibrate_detector(&cfg)?;
            eprintln!(
                "threshold {:.4} (dof {}): ideal false-alarm rate {:.4} +- {:.4} over {} slots",
                c.threshold,
                c.dof,
                c.ideal_rate(),
                c.standard_error(),
                c.ideal_slots
            );
            let files = write_calibration(&cfg.out_dir, &c)?;
            finish(&cfg.out_dir, "calibrate-detector", &cfg, files)
        }
    }
}
