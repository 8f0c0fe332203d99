//! Greedy user admission for budgets that cannot serve every requesting user.
//!
//! Candidates are visited strongest-first. Each one is offered its minimum
//! power given the users already admitted; it joins if that fits in the
//! remaining budget and is dropped for good otherwise.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::qos::{decode_order, QosSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionResult {
    pub admitted: Vec<bool>,
    /// Zero for rejected users, and for admitted users without a rate target.
    pub powers_w: Vec<f64>,
    pub remaining_w: f64,
    pub admitted_count: usize,
    /// Admitted users in the order they were accepted.
    pub admission_sequence: Vec<usize>,
}

/// Budget left after `allocated_total_w` has been assigned.
pub fn remaining_power(max_power_w: f64, allocated_total_w: f64) -> Result<f64> {
    if !(allocated_total_w >= 0.0) {
        return Err(Error::invalid("allocated_total_w", "must be nonnegative"));
    }
    if allocated_total_w > max_power_w {
        return Err(Error::OverBudget {
            allocated: allocated_total_w,
            budget: max_power_w,
        });
    }
    Ok(max_power_w - allocated_total_w)
}

/// Runs the greedy admission. A zero budget is accepted and admits only users
/// without a rate target.
pub fn admit_users(channel: &ChannelState, qos: &QosSpec, max_power_w: f64) -> Result<AdmissionResult> {
    let k = channel.num_users();
    if k == 0 {
        return Err(Error::invalid("channel", "needs at least one user"));
    }
    if qos.len() != k {
        return Err(Error::DimensionMismatch {
            what: "QoS entries",
            expected: k,
            actual: qos.len(),
        });
    }
    if !(max_power_w >= 0.0 && max_power_w.is_finite()) {
        return Err(Error::invalid("max_power_w", "must be finite and nonnegative"));
    }
    if let Some(user) = channel.composite_gain.iter().position(|&g| !(g > 0.0)) {
        return Err(Error::ZeroGain { user });
    }

    let mut admitted = vec![false; k];
    let mut powers_w = vec![0.0; k];
    let mut sequence = Vec::new();
    let mut allocated = 0.0;
    for user in decode_order(channel) {
        let required = (qos.omega[user] - 1.0) * (allocated + qos.noise_term(channel.composite_gain[user]));
        if allocated + required <= max_power_w {
            admitted[user] = true;
            powers_w[user] = required;
            allocated += required;
            sequence.push(user);
        }
    }
    Ok(AdmissionResult {
        admitted,
        powers_w,
        remaining_w: remaining_power(max_power_w, allocated)?,
        admitted_count: sequence.len(),
        admission_sequence: sequence,
    })
}
