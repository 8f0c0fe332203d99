//! Monte-Carlo trials and parameter sweeps.
//!
//! Trial `i` draws its channel from seed `master_seed ^ i`, so every sweep
//! point sees the same channels and differences between points come from the
//! swept parameter alone.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admission::admit_users;
use crate::channel::build_channel;
use crate::config::{ExperimentConfig, SystemConfig};
use crate::error::Error;
use crate::qos::check_feasibility;
use crate::solver::solve_ee;

pub const OUT_DIR_ENV: &str = "MIMO_EE_OUT_DIR";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: u64,
    /// The QoS minimum powers fit the budget.
    pub feasible: bool,
    /// Set when the solver produced an allocation.
    pub ee_bit_per_j: Option<f64>,
    /// All users on the feasible branch, the greedy count otherwise.
    pub admitted: usize,
    pub converged: bool,
    /// Solver failure on the feasible branch, kept instead of aborting the sweep.
    pub error: Option<String>,
}

pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    master_seed ^ trial_index
}

/// One channel draw: EE maximisation when the QoS targets fit the budget,
/// greedy admission otherwise.
pub fn run_trial(system: &SystemConfig, master_seed: u64, trial_index: u64) -> Result<TrialRecord, Error> {
    let seed = trial_seed(master_seed, trial_index);
    let channel = build_channel(&system.geometry, system.num_antennas, system.num_users, seed)?;
    let qos = system.qos_spec()?;
    let params = system.link_params()?;
    let gate = check_feasibility(&channel, &qos, system.max_power_w)?;
    let mut record = TrialRecord {
        trial_index,
        seed,
        feasible: gate.feasible,
        ee_bit_per_j: None,
        admitted: 0,
        converged: false,
        error: None,
    };
    if gate.feasible && system.max_power_w > 0.0 {
        record.admitted = system.num_users;
        match solve_ee(&channel, &qos, &params, system.max_power_w, &system.solver) {
            Ok(r) => {
                record.ee_bit_per_j = Some(r.achieved_ee);
                record.converged = r.converged;
            }
            Err(e) => record.error = Some(e.to_string()),
        }
    } else {
        // a zero budget only serves users without a rate target
        record.feasible = false;
        record.admitted = admit_users(&channel, &qos, system.max_power_w)?.admitted_count;
        record.converged = true;
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    /// Mean over trials that produced an allocation; zero if none did.
    pub mean_ee_bit_per_j: f64,
    #[serde(rename = "ci95")]
    pub ci95_halfwidth: f64,
    pub mean_admitted: f64,
    pub feasibility_rate: f64,
    pub num_trials: usize,
}

/// Runs trials `0..num_trials`, in parallel when the `parallel` feature is on.
pub fn run_trials(system: &SystemConfig, master_seed: u64, num_trials: usize) -> Result<Vec<TrialRecord>, Error> {
    let indices = 0..num_trials as u64;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        indices.into_par_iter().map(|i| run_trial(system, master_seed, i)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        indices.map(|i| run_trial(system, master_seed, i)).collect()
    }
}

/// Mean, normal-approximation 95% half-width, and rates over trial records.
pub fn aggregate(sweep_value: f64, records: &[TrialRecord]) -> SweepRow {
    let n = records.len();
    let ee: Vec<f64> = records.iter().filter_map(|r| r.ee_bit_per_j).collect();
    let (mean, ci) = if ee.is_empty() {
        (0.0, 0.0)
    } else {
        let m = ee.iter().sum::<f64>() / ee.len() as f64;
        let ci = if ee.len() > 1 {
            let var = ee.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (ee.len() - 1) as f64;
            1.96 * (var / ee.len() as f64).sqrt()
        } else {
            0.0
        };
        (m, ci)
    };
    SweepRow {
        sweep_value,
        mean_ee_bit_per_j: mean,
        ci95_halfwidth: ci,
        mean_admitted: records.iter().map(|r| r.admitted as f64).sum::<f64>() / n as f64,
        feasibility_rate: records.iter().filter(|r| r.feasible).count() as f64 / n as f64,
        num_trials: n,
    }
}

/// One row per sweep value (a single row for the base configuration when no
/// sweep is set), written to `output_path` when one is configured.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    config.validate()?;
    let mut rows = Vec::new();
    match &config.sweep {
        Some(sweep) => {
            for &value in &sweep.values {
                let mut system = config.system.clone();
                let si = sweep.variable.apply(&mut system, value)?;
                let records = run_trials(&system, config.master_seed, config.num_trials)?;
                rows.push(aggregate(si, &records));
            }
        }
        None => {
            let records = run_trials(&config.system, config.master_seed, config.num_trials)?;
            rows.push(aggregate(0.0, &records));
        }
    }
    if let Some(path) = &config.output_path {
        write_sweep_csv(path, &rows)?;
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
