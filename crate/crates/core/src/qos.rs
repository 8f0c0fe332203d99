//! Minimum-power QoS constraints and the feasibility gate.
//!
//! Users are processed strongest-first. The constraint for the user at position
//! `i` of that order is
//!
//! ```text
//! p_(i) >= (omega_(i) - 1) * (sum_{j < i} p_(j) + 1 / (qos_snr * g_(i)))
//! ```
//!
//! with `omega = 2^R_min` and `g` the composite channel gain.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};

/// Per-user minimum spectral efficiencies and the derived `omega` factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosSpec {
    /// bit/s/Hz.
    pub min_spectral_eff: Vec<f64>,
    /// `2^min_spectral_eff`.
    pub omega: Vec<f64>,
    /// Transmit SNR scale; `1 / (qos_snr * g_k)` is the noise-to-gain term in watts.
    pub qos_snr: f64,
}

impl QosSpec {
    pub fn new(min_spectral_eff: Vec<f64>, qos_snr: f64) -> Result<Self> {
        if let Some(bad) = min_spectral_eff.iter().position(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::invalid(
                "min_spectral_eff",
                format!("entry {bad} must be finite and nonnegative"),
            ));
        }
        if !(qos_snr > 0.0 && qos_snr.is_finite()) {
            return Err(Error::invalid("qos_snr", "must be positive"));
        }
        let omega = min_spectral_eff.iter().map(|r| r.exp2()).collect();
        Ok(Self {
            min_spectral_eff,
            omega,
            qos_snr,
        })
    }

    /// Same minimum rate for every user.
    pub fn uniform(num_users: usize, min_spectral_eff: f64, qos_snr: f64) -> Result<Self> {
        Self::new(vec![min_spectral_eff; num_users], qos_snr)
    }

    /// Default `qos_snr` is the inverse noise power, making `1/(qos_snr g)` equal `sigma^2 / g`.
    pub fn default_qos_snr(noise_power_w: f64) -> f64 {
        1.0 / noise_power_w
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Restricts the spec to the given users, in the given order.
    pub fn subset(&self, users: &[usize]) -> Self {
        Self {
            min_spectral_eff: users.iter().map(|&u| self.min_spectral_eff[u]).collect(),
            omega: users.iter().map(|&u| self.omega[u]).collect(),
            qos_snr: self.qos_snr,
        }
    }

    /// `1 / (qos_snr * g)`.
    pub fn noise_term(&self, gain: f64) -> f64 {
        1.0 / (self.qos_snr * gain)
    }
}

/// Result of the feasibility gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub required_powers_w: Vec<f64>,
    pub required_total_w: f64,
    pub order: Vec<usize>,
}

/// Users sorted by composite gain, strongest first; ties keep the lower index first.
pub fn decode_order(channel: &ChannelState) -> Vec<usize> {
    order_by_gain(&channel.composite_gain)
}

pub(crate) fn order_by_gain(gains: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gains.len()).collect();
    // stable sort keeps index order among equal gains
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    order
}

fn check_qos(channel: &ChannelState, qos: &QosSpec) -> Result<()> {
    if qos.len() != channel.num_users() {
        return Err(Error::DimensionMismatch {
            what: "QoS entries",
            expected: channel.num_users(),
            actual: qos.len(),
        });
    }
    if let Some(user) = channel.composite_gain.iter().position(|&g| !(g > 0.0)) {
        return Err(Error::ZeroGain { user });
    }
    Ok(())
}

fn check_order(order: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if order.len() != k || order.iter().any(|&u| u >= k || std::mem::replace(&mut seen[u], true)) {
        return Err(Error::invalid("order", "must be a permutation of the users"));
    }
    Ok(())
}

/// Minimum powers from the sequential recursion, reported in original user indexing.
pub fn min_required_powers(channel: &ChannelState, qos: &QosSpec, order: &[usize]) -> Result<Vec<f64>> {
    check_qos(channel, qos)?;
    check_order(order, channel.num_users())?;
    let mut out = vec![0.0; order.len()];
    let mut earlier = 0.0;
    for &k in order {
        let p = (qos.omega[k] - 1.0) * (earlier + qos.noise_term(channel.composite_gain[k]));
        out[k] = p;
        earlier += p;
    }
    Ok(out)
}

/// Right-hand side of every QoS constraint evaluated at the given powers.
pub fn requirements_at(powers: &[f64], channel: &ChannelState, qos: &QosSpec, order: &[usize]) -> Result<Vec<f64>> {
    check_qos(channel, qos)?;
    check_order(order, channel.num_users())?;
    if powers.len() != order.len() {
        return Err(Error::DimensionMismatch {
            what: "powers",
            expected: order.len(),
            actual: powers.len(),
        });
    }
    let mut out = vec![0.0; order.len()];
    let mut earlier = 0.0;
    for &k in order {
        out[k] = (qos.omega[k] - 1.0) * (earlier + qos.noise_term(channel.composite_gain[k]));
        earlier += powers[k];
    }
    Ok(out)
}

/// Largest shortfall `max_k (P_req,k(p) - p_k)`, or zero when every constraint holds.
pub fn max_qos_violation(powers: &[f64], channel: &ChannelState, qos: &QosSpec, order: &[usize]) -> Result<f64> {
    let req = requirements_at(powers, channel, qos, order)?;
    Ok(req
        .iter()
        .zip(powers)
        .map(|(r, p)| r - p)
        .fold(0.0, f64::max))
}

/// The gate: feasible iff the summed minimum powers fit within `max_power_w`.
pub fn check_feasibility(channel: &ChannelState, qos: &QosSpec, max_power_w: f64) -> Result<FeasibilityVerdict> {
    if !(max_power_w >= 0.0 && max_power_w.is_finite()) {
        return Err(Error::invalid("max_power_w", "must be finite and nonnegative"));
    }
    let order = decode_order(channel);
    let required_powers_w = min_required_powers(channel, qos, &order)?;
    let required_total_w: f64 = required_powers_w.iter().sum();
    Ok(FeasibilityVerdict {
        feasible: required_total_w <= max_power_w,
        required_powers_w,
        required_total_w,
        order,
    })
}
