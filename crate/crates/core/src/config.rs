//! Flat TOML configuration.
//!
//! Every key is optional and falls back to the defaults below. Powers may be
//! given in dBm or watts (not both), the noise density in dBm/Hz.
//!
//! ```toml
//! bandwidth_hz = 120e3
//! num_antennas = 128
//! num_users = 3
//! noise_psd_dbm_per_hz = -170.0
//! circuit_power_dbm = 7.0
//! circuit_power_scope = "total"      # or "per_antenna"
//! max_power_w = 1.0
//! target_ber = 1e-3
//! min_spectral_eff = 1.0             # or one entry per user
//! min_distance_m = 35.0
//! max_distance_m = 250.0
//! path_loss_exponent = 3.8
//! shadow_std_db = 10.0
//! carrier_factor = 1.0
//! budget_mode = "at_most"            # or "exact"
//!
//! sweep_variable = "circuit_power_dbm"
//! sweep_values = [0.0, 4.0, 7.0, 10.0]
//! num_trials = 200
//! master_seed = 1
//! output_path = "ee_vs_pc.csv"
//! ```
//!
//! Solver keys (`bisection_rel_tol`, `max_multiplier_iters`, `step_theta`, ...)
//! sit at the same level and keep the names of [`SolverConfig`] fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::GeometryConfig;
use crate::error::Error;
use crate::link::LinkParams;
use crate::qos::QosSpec;
use crate::solver::{BudgetMode, ChiVariant, SolverConfig, StepSchedule};
use crate::units::dbm_to_w;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(#[from] Error),
}

/// Whether the configured circuit power covers the whole array or one antenna.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitPowerScope {
    /// Fixed total `M P_c,m`; the per-antenna share shrinks as `M` grows.
    #[default]
    Total,
    /// Fixed `P_c,m`; the total grows with `M`.
    PerAntenna,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MinRate {
    Uniform(f64),
    PerUser(Vec<f64>),
}

/// One simulated cell, in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub geometry: GeometryConfig,
    pub bandwidth_hz: f64,
    pub num_antennas: usize,
    pub num_users: usize,
    pub noise_psd_w_per_hz: f64,
    pub circuit_power_w: f64,
    pub circuit_power_scope: CircuitPowerScope,
    pub max_power_w: f64,
    pub target_ber: f64,
    pub min_spectral_eff: MinRate,
    /// `None` uses the inverse noise power.
    pub qos_snr: Option<f64>,
    pub solver: SolverConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            bandwidth_hz: 120e3,
            num_antennas: 128,
            num_users: 3,
            noise_psd_w_per_hz: dbm_to_w(-170.0),
            circuit_power_w: dbm_to_w(7.0),
            circuit_power_scope: CircuitPowerScope::Total,
            max_power_w: 1.0,
            target_ber: 1e-3,
            min_spectral_eff: MinRate::Uniform(1.0),
            qos_snr: None,
            solver: SolverConfig::default(),
        }
    }
}

impl SystemConfig {
    pub fn circuit_power_per_antenna_w(&self) -> f64 {
        match self.circuit_power_scope {
            CircuitPowerScope::Total => self.circuit_power_w / self.num_antennas as f64,
            CircuitPowerScope::PerAntenna => self.circuit_power_w,
        }
    }

    pub fn link_params(&self) -> Result<LinkParams, Error> {
        LinkParams::new(
            self.bandwidth_hz,
            self.noise_psd_w_per_hz,
            self.circuit_power_per_antenna_w(),
            self.num_antennas,
            self.target_ber,
        )
    }

    pub fn qos_spec(&self) -> Result<QosSpec, Error> {
        let rates = match &self.min_spectral_eff {
            MinRate::Uniform(r) => vec![*r; self.num_users],
            MinRate::PerUser(v) if v.len() >= self.num_users => v[..self.num_users].to_vec(),
            MinRate::PerUser(v) => {
                return Err(Error::DimensionMismatch {
                    what: "min_spectral_eff entries",
                    expected: self.num_users,
                    actual: v.len(),
                })
            }
        };
        let snr = self
            .qos_snr
            .unwrap_or_else(|| QosSpec::default_qos_snr(self.noise_psd_w_per_hz * self.bandwidth_hz));
        QosSpec::new(rates, snr)
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.geometry.validate()?;
        if self.num_users == 0 {
            return Err(Error::invalid("num_users", "must be at least 1"));
        }
        if !(self.max_power_w >= 0.0 && self.max_power_w.is_finite()) {
            return Err(Error::invalid("max_power_w", "must be finite and nonnegative"));
        }
        self.link_params()?;
        self.qos_spec()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    CircuitPowerDbm,
    CircuitPowerW,
    NumAntennas,
    MaxPowerDbm,
    MaxPowerW,
    NumRequestingUsers,
    MinRate,
}

impl SweepVariable {
    /// Applies one sweep value and returns it in SI units for the CSV.
    pub fn apply(self, system: &mut SystemConfig, value: f64) -> Result<f64, Error> {
        let count = |name: &'static str| {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::invalid(name, format!("sweep value {value} is not a positive integer")))
            }
        };
        Ok(match self {
            SweepVariable::CircuitPowerDbm => {
                system.circuit_power_w = dbm_to_w(value);
                system.circuit_power_w
            }
            SweepVariable::CircuitPowerW => {
                system.circuit_power_w = value;
                value
            }
            SweepVariable::NumAntennas => {
                system.num_antennas = count("num_antennas")?;
                value
            }
            SweepVariable::MaxPowerDbm => {
                system.max_power_w = dbm_to_w(value);
                system.max_power_w
            }
            SweepVariable::MaxPowerW => {
                system.max_power_w = value;
                value
            }
            SweepVariable::NumRequestingUsers => {
                system.num_users = count("num_users")?;
                value
            }
            SweepVariable::MinRate => {
                system.min_spectral_eff = MinRate::Uniform(value);
                value
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub sweep: Option<Sweep>,
    pub num_trials: usize,
    pub master_seed: u64,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            sweep: None,
            num_trials: 200,
            master_seed: 1,
            output_path: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    bandwidth_hz: Option<f64>,
    num_antennas: Option<usize>,
    num_users: Option<usize>,
    noise_psd_dbm_per_hz: Option<f64>,
    noise_psd_w_per_hz: Option<f64>,
    circuit_power_dbm: Option<f64>,
    circuit_power_w: Option<f64>,
    circuit_power_scope: Option<CircuitPowerScope>,
    max_power_dbm: Option<f64>,
    max_power_w: Option<f64>,
    target_ber: Option<f64>,
    min_spectral_eff: Option<MinRate>,
    qos_snr: Option<f64>,

    min_distance_m: Option<f64>,
    max_distance_m: Option<f64>,
    path_loss_exponent: Option<f64>,
    shadow_std_db: Option<f64>,
    carrier_factor: Option<f64>,

    bisection_rel_tol: Option<f64>,
    fixed_point_tol: Option<f64>,
    multiplier_tol: Option<f64>,
    max_bisection_iters: Option<usize>,
    max_inner_iters: Option<usize>,
    max_multiplier_iters: Option<usize>,
    step_theta: Option<f64>,
    step_lambda: Option<f64>,
    step_schedule: Option<StepSchedule>,
    power_floor_w: Option<f64>,
    budget_mode: Option<BudgetMode>,
    chi_variant: Option<ChiVariant>,

    sweep_variable: Option<SweepVariable>,
    sweep_values: Option<Vec<f64>>,
    num_trials: Option<usize>,
    master_seed: Option<u64>,
    output_path: Option<PathBuf>,
}

fn one_of(
    name: &'static str,
    dbm: Option<f64>,
    watts: Option<f64>,
    default: f64,
) -> Result<f64, ConfigError> {
    match (dbm, watts) {
        (Some(_), Some(_)) => Err(Error::invalid(name, "give it in dBm or in watts, not both").into()),
        (Some(d), None) => Ok(dbm_to_w(d)),
        (None, Some(w)) => Ok(w),
        (None, None) => Ok(default),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let d = SystemConfig::default();
        let g = d.geometry;
        let s = d.solver.clone();
        let system = SystemConfig {
            geometry: GeometryConfig {
                min_distance_m: raw.min_distance_m.unwrap_or(g.min_distance_m),
                max_distance_m: raw.max_distance_m.unwrap_or(g.max_distance_m),
                path_loss_exponent: raw.path_loss_exponent.unwrap_or(g.path_loss_exponent),
                shadow_std_db: raw.shadow_std_db.unwrap_or(g.shadow_std_db),
                carrier_factor: raw.carrier_factor.unwrap_or(g.carrier_factor),
            },
            bandwidth_hz: raw.bandwidth_hz.unwrap_or(d.bandwidth_hz),
            num_antennas: raw.num_antennas.unwrap_or(d.num_antennas),
            num_users: raw.num_users.unwrap_or(d.num_users),
            noise_psd_w_per_hz: one_of(
                "noise_psd",
                raw.noise_psd_dbm_per_hz,
                raw.noise_psd_w_per_hz,
                d.noise_psd_w_per_hz,
            )?,
            circuit_power_w: one_of("circuit_power", raw.circuit_power_dbm, raw.circuit_power_w, d.circuit_power_w)?,
            circuit_power_scope: raw.circuit_power_scope.unwrap_or(d.circuit_power_scope),
            max_power_w: one_of("max_power", raw.max_power_dbm, raw.max_power_w, d.max_power_w)?,
            target_ber: raw.target_ber.unwrap_or(d.target_ber),
            min_spectral_eff: raw.min_spectral_eff.unwrap_or(d.min_spectral_eff),
            qos_snr: raw.qos_snr,
            solver: SolverConfig {
                bisection_rel_tol: raw.bisection_rel_tol.unwrap_or(s.bisection_rel_tol),
                fixed_point_tol: raw.fixed_point_tol.unwrap_or(s.fixed_point_tol),
                multiplier_tol: raw.multiplier_tol.unwrap_or(s.multiplier_tol),
                max_bisection_iters: raw.max_bisection_iters.unwrap_or(s.max_bisection_iters),
                max_inner_iters: raw.max_inner_iters.unwrap_or(s.max_inner_iters),
                max_multiplier_iters: raw.max_multiplier_iters.unwrap_or(s.max_multiplier_iters),
                step_theta: raw.step_theta.unwrap_or(s.step_theta),
                step_lambda: raw.step_lambda.unwrap_or(s.step_lambda),
                step_schedule: raw.step_schedule.unwrap_or(s.step_schedule),
                power_floor_w: raw.power_floor_w.unwrap_or(s.power_floor_w),
                budget_mode: raw.budget_mode.unwrap_or(s.budget_mode),
                chi_variant: raw.chi_variant.unwrap_or(s.chi_variant),
            },
        };
        let sweep = match (raw.sweep_variable, raw.sweep_values) {
            (Some(variable), Some(values)) => Some(Sweep { variable, values }),
            (None, None) => None,
            (Some(_), None) => return Err(Error::invalid("sweep_values", "required with sweep_variable").into()),
            (None, Some(_)) => return Err(Error::invalid("sweep_variable", "required with sweep_values").into()),
        };
        let config = ExperimentConfig {
            system,
            sweep,
            num_trials: raw.num_trials.unwrap_or(200),
            master_seed: raw.master_seed.unwrap_or(1),
            output_path: raw.output_path,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.system.validate()?;
        if self.num_trials == 0 {
            return Err(Error::invalid("num_trials", "must be at least 1"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::invalid("sweep_values", "must not be empty"));
            }
            let up = sweep.values.windows(2).all(|w| w[0] < w[1]);
            let down = sweep.values.windows(2).all(|w| w[0] > w[1]);
            if !(up || down) {
                return Err(Error::invalid("sweep_values", "must be strictly monotone"));
            }
            for &v in &sweep.values {
                let mut probe = self.system.clone();
                sweep.variable.apply(&mut probe, v)?;
                probe.validate()?;
            }
        }
        Ok(())
    }
}
