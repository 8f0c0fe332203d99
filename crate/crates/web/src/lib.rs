//! Browser demo: energy-efficiency curves, admission counts and channel
//! hardening, each small enough to run on the page's main thread.
//!
//! The plain functions are target independent; `bindings` wraps them for
//! wasm-bindgen.

use mimo_ee::admission::admit_users;
use mimo_ee::channel::{build_channel, sample_small_scale};
use mimo_ee::config::{ExperimentConfig, MinRate, Sweep, SweepVariable, SystemConfig};
use mimo_ee::experiment::{run_sweep, trial_seed};
use mimo_ee::solver::BudgetMode;

#[cfg(target_arch = "wasm32")]
mod bindings;

/// Mean EE (bit/J) and its 95% half-width at each value, flattened as
/// `[mean0, ci0, mean1, ci1, ...]`.
///
/// `variable` is `circuit_power_dbm`, `num_antennas` or `max_power_w`; the
/// last radiates the whole budget so the curve is not flat.
pub fn ee_curve(
    variable: &str,
    values: &[f64],
    num_users: usize,
    num_antennas: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let mut system = SystemConfig {
        num_users,
        num_antennas,
        ..SystemConfig::default()
    };
    let variable = match variable {
        "circuit_power_dbm" => SweepVariable::CircuitPowerDbm,
        "num_antennas" => SweepVariable::NumAntennas,
        "max_power_w" => {
            system.solver.budget_mode = BudgetMode::Exact;
            SweepVariable::MaxPowerW
        }
        other => return Err(format!("unknown sweep variable `{other}`")),
    };
    let config = ExperimentConfig {
        system,
        sweep: Some(Sweep {
            variable,
            values: values.to_vec(),
        }),
        num_trials: trials,
        master_seed: seed,
        output_path: None,
    };
    let rows = run_sweep(&config).map_err(|e| e.to_string())?;
    Ok(rows
        .iter()
        .flat_map(|r| [r.mean_ee_bit_per_j, r.ci95_halfwidth])
        .collect())
}

/// Mean greedy admission count at each budget (W).
pub fn admitted_vs_budget(
    budgets_w: &[f64],
    num_users: usize,
    min_rate: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let system = SystemConfig {
        num_users,
        min_spectral_eff: MinRate::Uniform(min_rate),
        ..SystemConfig::default()
    };
    system.validate().map_err(|e| e.to_string())?;
    if trials == 0 {
        return Err("trials must be at least 1".into());
    }
    let qos = system.qos_spec().map_err(|e| e.to_string())?;
    let channels = (0..trials as u64)
        .map(|i| build_channel(&system.geometry, system.num_antennas, num_users, trial_seed(seed, i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    budgets_w
        .iter()
        .map(|&budget| {
            let mut total = 0usize;
            for ch in &channels {
                total += admit_users(ch, &qos, budget).map_err(|e| e.to_string())?.admitted_count;
            }
            Ok(total as f64 / trials as f64)
        })
        .collect()
}

/// For each antenna count `M`, statistics of two users' fading vectors over
/// `draws` realizations, flattened as triples: mean of `|h|^2 / M`, its
/// standard deviation, and mean of `|h_1^H h_2|^2 / (|h_2|^2 M)`.
pub fn channel_hardening(antennas: &[usize], draws: usize, seed: u64) -> Result<Vec<f64>, String> {
    if draws < 2 {
        return Err("draws must be at least 2".into());
    }
    let mut out = Vec::with_capacity(3 * antennas.len());
    for &m in antennas {
        let (mut sum, mut sum_sq, mut cross) = (0.0, 0.0, 0.0);
        for d in 0..draws as u64 {
            let h = sample_small_scale(m, 2, trial_seed(seed, d)).map_err(|e| e.to_string())?;
            let norm = h.column_norm_sqr(0) / m as f64;
            sum += norm;
            sum_sq += norm * norm;
            cross += h.column_inner(0, 1).norm_sqr() / (h.column_norm_sqr(1) * m as f64);
        }
        let n = draws as f64;
        let mean = sum / n;
        let var = (sum_sq - n * mean * mean) / (n - 1.0);
        out.extend([mean, var.max(0.0).sqrt(), cross / n]);
    }
    Ok(out)
}
