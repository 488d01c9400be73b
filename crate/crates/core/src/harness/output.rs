//! CSV and manifest writers. Floats carry 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::sounding::{design_grid, pilot_overhead};
use crate::Result;

use super::config::{Arm, ExperimentConfig, SweepKind};
use super::integrated::IntegratedRun;
use super::sweep::{Calibration, SweepResult};

fn f(v: f64) -> String {
    format!("{v:.8e}")
}

fn b(v: bool) -> u8 {
    v as u8
}

fn write(dir: &Path, name: &str, body: String, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body)?;
    files.push(path);
    Ok(())
}

/// Pilot share of a slot at the configured grid, slot length and symbol rate.
pub fn configured_pilot_overhead(cfg: &ExperimentConfig) -> Result<f64> {
    let grid = design_grid(cfg.m_t, cfg.m_r, &cfg.geometry())?;
    Ok(pilot_overhead(&grid, cfg.slot_duration, cfg.symbol_rate))
}

/// One `<sweep>_<arm>.csv` per arm with every trial, plus
/// `<sweep>_summary.csv` with the aggregates.
pub fn write_sweep(dir: &Path, result: &SweepResult, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let var = result.kind.variable();
    let name = result.kind.name();
    let mut files = Vec::new();
    for (i, arm) in result.arms.iter().enumerate() {
        let mut s = format!("{var},trial,nmse_ratio,nmse_db\n");
        for p in &result.points {
            for (k, &r) in p.arms[i].ratios.iter().enumerate() {
                let _ = writeln!(s, "{},{k},{},{}", f(p.value), f(r), f(super::metrics::ratio_to_db(r)));
            }
        }
        write(dir, &format!("{name}_{arm}.csv"), s, &mut files)?;
    }
    let mut s = format!("{var},arm,trials,mean_nmse_db,std_nmse_db,pilot_overhead\n");
    for p in &result.points {
        let (m_t, m_r) = match result.kind {
            SweepKind::AcqVsGrid | SweepKind::TrackVsGrid => (p.value as usize, p.value as usize),
            _ => (cfg.m_t, cfg.m_r),
        };
        let grid = design_grid(m_t, m_r, &cfg.geometry())?;
        let overhead = pilot_overhead(&grid, cfg.slot_duration, cfg.symbol_rate);
        for a in &p.arms {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                f(p.value),
                a.arm,
                a.aggregate.trials,
                f(a.aggregate.mean_db),
                f(a.aggregate.std_db),
                f(overhead)
            );
        }
    }
    write(dir, &format!("{name}_summary.csv"), s, &mut files)?;
    Ok(files)
}

/// Detection log, one file per arm (NMSE, rate and gap to ideal CSI), the
/// tracker log and a per-run summary.
pub fn write_integrated(dir: &Path, runs: &[IntegratedRun], cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    let mut s = String::from(
        "run,slot,true_paths,arrivals,departures,true_change,tested,statistic,threshold,declared,acquired,outage,estimated_paths\n",
    );
    for run in runs {
        for r in &run.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                run.run,
                r.slot,
                r.true_paths,
                r.arrivals,
                r.departures,
                b(r.true_change),
                b(r.tested),
                f(r.statistic),
                f(r.threshold),
                b(r.declared),
                b(r.acquired),
                b(r.outage),
                r.estimated_paths
            );
        }
    }
    write(dir, "integrated_detection.csv", s, &mut files)?;

    let arms: Vec<Arm> = runs.first().map(|r| r.arms.clone()).unwrap_or_default();
    for (i, arm) in arms.iter().enumerate() {
        let mut s = String::from("run,slot,nmse_db,rate,gap_to_ideal\n");
        for run in runs {
            let ideal = run.arm_index(Arm::Ideal).expect("ideal arm always present");
            for r in &run.records {
                let a = r.arms[i];
                let _ = writeln!(s, "{},{},{},{},{}", run.run, r.slot, f(a.nmse_db), f(a.rate), f(r.arms[ideal].rate - a.rate));
            }
        }
        write(dir, &format!("integrated_{arm}.csv"), s, &mut files)?;
    }

    let mut s = String::from("run,slot,path,phi,psi,var_phi,var_psi,gain_re,gain_im,nis\n");
    for run in runs {
        for e in &run.tracker_log {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                run.run,
                e.slot,
                e.path,
                f(e.phi),
                f(e.psi),
                f(e.var_phi),
                f(e.var_psi),
                f(e.gain_re),
                f(e.gain_im),
                f(e.nis)
            );
        }
    }
    write(dir, "integrated_tracker.csv", s, &mut files)?;

    let overhead = configured_pilot_overhead(cfg)?;
    let mut s = String::from(
        "run,slots,true_changes,detected,missed,false_alarms,h0_slots,false_alarm_rate,acquisitions,outages,pilot_overhead\n",
    );
    for run in runs {
        let m = run.summary;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            run.run,
            m.slots,
            m.true_changes,
            m.detected,
            m.missed,
            m.false_alarms,
            m.h0_slots,
            f(m.false_alarm_rate()),
            m.acquisitions,
            m.outages,
            f(overhead)
        );
    }
    write(dir, "integrated_summary.csv", s, &mut files)?;
    Ok(files)
}

pub fn write_calibration(dir: &Path, c: &Calibration) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut s = String::from("mode,p_fa,threshold,dof,slots,alarms,rate,standard_error\n");
    let _ = writeln!(
        s,
        "ideal,{},{},{},{},{},{},{}",
        f(c.p_fa),
        f(c.threshold),
        c.dof,
        c.ideal_slots,
        c.ideal_alarms,
        f(c.ideal_rate()),
        f(c.standard_error())
    );
    let t = &c.tracked;
    let se = (c.p_fa * (1.0 - c.p_fa) / t.h0_slots.max(1) as f64).sqrt();
    let _ = writeln!(
        s,
        "tracked,{},{},{},{},{},{},{}",
        f(c.p_fa),
        f(c.threshold),
        c.dof,
        t.h0_slots,
        t.false_alarms,
        f(t.false_alarm_rate()),
        f(se)
    );
    write(dir, "calibration.csv", s, &mut files)?;
    Ok(files)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    files: Vec<String>,
    config: &'a ExperimentConfig,
}

/// `manifest.toml`: the command, library version, seed, files written and
/// the full configuration. Contains nothing time- or host-dependent.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, files: &[PathBuf]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        files: files
            .iter()
            .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
            .collect(),
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| crate::Error::Config(e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text)?;
    Ok(path)
}
