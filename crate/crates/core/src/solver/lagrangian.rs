//! Pieces of the Lagrangian: the QoS cross-term `chi`, the stationarity fixed
//! point for the powers, its residual, and the projected multiplier step.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::{BudgetMode, SolverConfig, SolverError, StepSchedule};
use crate::channel::ChannelState;
use crate::link::{lower_bound_rate, LinkParams, PowerAllocation};
use crate::qos::{requirements_at, QosSpec};

/// Which QoS multipliers enter the derivative with respect to `p_k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiVariant {
    /// Users decoded after `k`: their constraints contain `p_k` in the
    /// interference prefix, so these are the terms the derivative produces.
    #[default]
    LaterUsers,
    /// Users decoded before `k`, as the sum is sometimes written.
    EarlierUsers,
}

/// `sum_k r~_k - q (sum_k p_k + M P_c,m)`, the parametric form of the ratio.
pub fn parametric_objective(
    q: f64,
    alloc: &PowerAllocation,
    channel: &ChannelState,
    params: &LinkParams,
) -> Result<f64, SolverError> {
    if !(q >= 0.0) {
        return Err(crate::error::Error::invalid("q", "must be nonnegative").into());
    }
    let rates: f64 = (0..channel.num_users())
        .map(|k| lower_bound_rate(alloc, channel, params, k))
        .sum::<Result<f64, _>>()?;
    Ok(rates - q * (alloc.total_w + params.total_circuit_power_w()))
}

/// `lambda_k - sum_j (omega_j - 1) lambda_j`, the sum running over the users
/// after (or, for [`ChiVariant::EarlierUsers`], before) `user` in `order`.
pub fn chi_term(user: usize, lambda: &[f64], omega: &[f64], order: &[usize], variant: ChiVariant) -> f64 {
    let pos = order
        .iter()
        .position(|&u| u == user)
        .expect("user must appear in the decoding order");
    let others = match variant {
        ChiVariant::LaterUsers => &order[pos + 1..],
        ChiVariant::EarlierUsers => &order[..pos],
    };
    lambda[user] - others.iter().map(|&j| (omega[j] - 1.0) * lambda[j]).sum::<f64>()
}

fn interference_plus_noise(powers: &[f64], channel: &ChannelState, params: &LinkParams) -> Vec<f64> {
    let total: f64 = powers.iter().sum();
    powers
        .iter()
        .zip(&channel.large_scale)
        .map(|(p, beta)| (total - p).max(0.0) + params.noise_power_w / beta)
        .collect()
}

/// Multipliers of the power-domain Lagrangian.
#[derive(Debug, Clone, Copy)]
pub struct Multipliers<'a> {
    pub q: f64,
    pub theta: f64,
    pub lambda: &'a [f64],
}

/// Jacobi iteration of the stationarity condition
///
/// ```text
/// p_k <- B / ( ln2 (q + theta - chi_k) + sum_{j != k} B / (sum_{i != j} p_i + sigma^2/beta_j) )
/// ```
///
/// clamped below at `power_floor_w`, until the largest change is below
/// `fixed_point_tol` or `max_inner_iters` sweeps have run.
pub fn fixed_point_power_update(
    mult: Multipliers<'_>,
    channel: &ChannelState,
    qos: &QosSpec,
    params: &LinkParams,
    initial_powers: &[f64],
    config: &SolverConfig,
) -> Result<Vec<f64>, SolverError> {
    let k = channel.num_users();
    if initial_powers.len() != k || mult.lambda.len() != k || qos.len() != k {
        return Err(crate::error::Error::DimensionMismatch {
            what: "users",
            expected: k,
            actual: initial_powers.len(),
        }
        .into());
    }
    if initial_powers.iter().any(|&p| !(p > 0.0)) {
        return Err(crate::error::Error::invalid("initial_powers", "must be positive").into());
    }
    let order = crate::qos::decode_order(channel);
    let chi: Vec<f64> = (0..k)
        .map(|u| chi_term(u, mult.lambda, &qos.omega, &order, config.chi_variant))
        .collect();
    let b = params.bandwidth_hz;
    let mut p = initial_powers.to_vec();
    let mut change = f64::INFINITY;
    for _ in 0..config.max_inner_iters {
        let interference = interference_plus_noise(&p, channel, params);
        let inv_sum: f64 = interference.iter().map(|i| b / i).sum();
        let mut next = vec![0.0; k];
        for u in 0..k {
            let denom = LN_2 * (mult.q + mult.theta - chi[u]) + (inv_sum - b / interference[u]);
            if !(denom > 0.0) {
                return Err(SolverError::NonPositiveDenominator { user: u });
            }
            next[u] = (b / denom).max(config.power_floor_w);
        }
        change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        p = next;
        if change < config.fixed_point_tol {
            return Ok(p);
        }
    }
    Err(SolverError::FixedPointNotConverged {
        iterations: config.max_inner_iters,
        max_change: change,
        powers: p,
    })
}

/// `d Phi / d p_k` for every user, with
/// `Phi = -[sum r~ - q(sum p + P_c)] - sum lambda_k g_k(p) - theta (P_max - sum p)`.
/// Zero at a stationary point.
pub fn stationarity_residual(
    mult: Multipliers<'_>,
    powers: &[f64],
    channel: &ChannelState,
    qos: &QosSpec,
    params: &LinkParams,
    variant: ChiVariant,
) -> Vec<f64> {
    let order = crate::qos::decode_order(channel);
    let b = params.bandwidth_hz;
    let interference = interference_plus_noise(powers, channel, params);
    let inv_sum: f64 = interference.iter().map(|i| b / (LN_2 * i)).sum();
    (0..powers.len())
        .map(|u| {
            let rate_grad = b / (LN_2 * powers[u]) - (inv_sum - b / (LN_2 * interference[u]));
            let chi = chi_term(u, mult.lambda, &qos.omega, &order, variant);
            -rate_grad + mult.q + mult.theta - chi
        })
        .collect()
}

/// Prices on the constraints in logarithmic form: `ln(P_max / sum p) >= 0`
/// for the budget and `ln(p_k / P_req,k(p)) >= 0` for QoS. Expressed in units
/// of `B / ln 2` per unit of log-violation, so one step size suits every
/// channel scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPrices {
    pub budget: f64,
    pub qos: Vec<f64>,
}

impl DualPrices {
    pub fn zeros(num_users: usize) -> Self {
        Self {
            budget: 0.0,
            qos: vec![0.0; num_users],
        }
    }

    /// Converts to power-domain multipliers `(theta, lambda)` in bit/J at `powers`.
    pub fn to_power_domain(&self, powers: &[f64], params: &LinkParams) -> (f64, Vec<f64>) {
        let scale = params.bandwidth_hz / LN_2;
        let total: f64 = powers.iter().sum();
        let theta = scale * self.budget / total;
        let lambda = self.qos.iter().zip(powers).map(|(nu, p)| scale * nu / p).collect();
        (theta, lambda)
    }
}

/// Log-form violation of every constraint at `powers`; `None` marks a QoS
/// constraint that is absent because `omega_k = 1`.
pub(crate) fn log_slacks(
    powers: &[f64],
    channel: &ChannelState,
    qos: &QosSpec,
    order: &[usize],
    max_power_w: f64,
) -> Result<(f64, Vec<Option<f64>>), SolverError> {
    let req = requirements_at(powers, channel, qos, order)?;
    let total: f64 = powers.iter().sum();
    let budget = (max_power_w / total).ln();
    let qos_slack = powers
        .iter()
        .zip(&req)
        .map(|(p, r)| (*r > 0.0).then(|| (p / r).ln()))
        .collect();
    Ok((budget, qos_slack))
}

/// Projected subgradient step on the prices:
/// `price <- max(0, price - s_n * slack)`, where a negative slack (violation)
/// raises the price. `s_n` is the configured step, divided by `sqrt(iteration)`
/// under [`StepSchedule::Diminishing`]. The budget price is only updated when
/// the budget is an inequality.
pub fn update_multipliers(
    prices: &DualPrices,
    powers: &[f64],
    channel: &ChannelState,
    qos: &QosSpec,
    max_power_w: f64,
    config: &SolverConfig,
    iteration: usize,
) -> Result<DualPrices, SolverError> {
    let order = crate::qos::decode_order(channel);
    let (budget_slack, qos_slack) = log_slacks(powers, channel, qos, &order, max_power_w)?;
    let unit = DualPrices {
        budget: 1.0,
        qos: vec![1.0; prices.qos.len()],
    };
    Ok(step_prices(prices, budget_slack, &qos_slack, &unit, config, iteration))
}

/// One projected price step with per-constraint step multipliers `scale`.
pub(crate) fn step_prices(
    prices: &DualPrices,
    budget_slack: f64,
    qos_slack: &[Option<f64>],
    scale: &DualPrices,
    config: &SolverConfig,
    iteration: usize,
) -> DualPrices {
    let damping = match config.step_schedule {
        StepSchedule::Constant => 1.0,
        StepSchedule::Diminishing => 1.0 / (iteration.max(1) as f64).sqrt(),
    };
    let budget = match config.budget_mode {
        BudgetMode::AtMost => (prices.budget - config.step_theta * damping * scale.budget * budget_slack).max(0.0),
        BudgetMode::Exact => prices.budget,
    };
    let qos = prices
        .qos
        .iter()
        .zip(qos_slack)
        .zip(&scale.qos)
        .map(|((nu, slack), c)| match slack {
            Some(s) => (nu - config.step_lambda * damping * c * s).max(0.0),
            None => 0.0,
        })
        .collect();
    DualPrices { budget, qos }
}
