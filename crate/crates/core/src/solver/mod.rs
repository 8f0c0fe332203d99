//! Energy-efficiency maximisation.
//!
//! The ratio `R(p) / (sum p + M P_c,m)` is maximised by bisection on the
//! efficiency level `q`: for each `q` the parametric problem
//! `max R(p) - q (sum p + M P_c,m)` subject to QoS and the budget is solved, and
//! the bracket moves up when the returned allocation reaches efficiency `q`.
//!
//! The parametric problem is solved in log-power coordinates, where it is
//! concave. The Lagrangian for fixed prices is maximised by Newton's method,
//! and the prices take projected Newton steps on the dual function, falling
//! back to the projected gradient steps of [`update_multipliers`]. The Jacobi
//! update of the stationarity condition is exposed as
//! [`fixed_point_power_update`] and agrees with the Newton solution at
//! convergence, but contracts too slowly near interference-limited optima to
//! serve as the inner engine.

mod lagrangian;
mod newton;

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lagrangian::{
    chi_term, fixed_point_power_update, parametric_objective, stationarity_residual, update_multipliers, ChiVariant,
    DualPrices, Multipliers,
};
use newton::{InnerContext, InnerSolution, LogProblem};

use crate::channel::ChannelState;
use crate::error::Error;
use crate::link::{lower_bound_energy_efficiency, lower_bound_sum_rate, LinkParams, PowerAllocation};
use crate::qos::{check_feasibility, QosSpec};

/// How the total-power constraint is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    /// `sum p <= P_max`.
    #[default]
    AtMost,
    /// `sum p = P_T`: the whole budget is radiated.
    Exact,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    #[default]
    Constant,
    /// Step divided by the square root of the iteration count.
    Diminishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Bisection stops once `v - u <= bisection_rel_tol * u`.
    pub bisection_rel_tol: f64,
    /// Largest per-user power change (W) accepted as a Jacobi fixed point.
    pub fixed_point_tol: f64,
    /// Constraint violation (log scale) accepted by the multiplier loop.
    pub multiplier_tol: f64,
    pub max_bisection_iters: usize,
    /// Newton iterations per price update; also caps Jacobi sweeps.
    pub max_inner_iters: usize,
    pub max_multiplier_iters: usize,
    pub step_theta: f64,
    pub step_lambda: f64,
    pub step_schedule: StepSchedule,
    pub power_floor_w: f64,
    pub budget_mode: BudgetMode,
    pub chi_variant: ChiVariant,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            bisection_rel_tol: 1e-7,
            fixed_point_tol: 1e-8,
            multiplier_tol: 1e-9,
            max_bisection_iters: 60,
            max_inner_iters: 200,
            max_multiplier_iters: 500,
            step_theta: 0.2,
            step_lambda: 0.2,
            step_schedule: StepSchedule::Constant,
            power_floor_w: 1e-12,
            budget_mode: BudgetMode::AtMost,
            chi_variant: ChiVariant::LaterUsers,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            ("bisection_rel_tol", self.bisection_rel_tol),
            ("fixed_point_tol", self.fixed_point_tol),
            ("multiplier_tol", self.multiplier_tol),
            ("step_theta", self.step_theta),
            ("step_lambda", self.step_lambda),
            ("power_floor_w", self.power_floor_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        let counts = [
            ("max_bisection_iters", self.max_bisection_iters),
            ("max_inner_iters", self.max_inner_iters),
            ("max_multiplier_iters", self.max_multiplier_iters),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("QoS needs {required_total_w} W but the budget is {max_power_w} W")]
    InfeasibleInput { required_total_w: f64, max_power_w: f64 },

    #[error("denominator of the power update for user {user} is not positive")]
    NonPositiveDenominator { user: usize },

    #[error("fixed point not reached after {iterations} sweeps (last change {max_change} W)")]
    FixedPointNotConverged {
        iterations: usize,
        max_change: f64,
        powers: Vec<f64>,
    },

    #[error("best feasible allocation has negative efficiency {best_ee} bit/J; the rate targets push the lower-bound rate below zero")]
    NegativeEfficiency { best_ee: f64, powers: Vec<f64> },

    #[error("solver did not converge: {reason}")]
    NoConvergence { reason: String },

    #[error(transparent)]
    Model(#[from] Error),
}

/// One bisection step: the bracket after the step and the efficiency reached
/// by the allocation computed for its midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub q: f64,
    pub realized_ee: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub powers_w: Vec<f64>,
    /// Lower-bound efficiency of `powers_w`, bit/J.
    pub achieved_ee: f64,
    /// Final bisection midpoint.
    pub q_star: f64,
    /// Budget multiplier in bit/J per watt of power.
    pub theta: f64,
    /// QoS multipliers, original user indexing.
    pub lambda: Vec<f64>,
    /// Bisection closed the bracket and the last inner solve converged.
    pub converged: bool,
    pub bisection_trace: Vec<BisectionStep>,
    /// Absolute bracket width at termination, bit/J.
    pub bisection_tol: f64,
    /// `R(p) - q_star * (sum p + M P_c,m)`.
    pub parametric_residual: f64,
    /// Largest stationarity residual relative to the largest rate-gradient term.
    pub stationarity_residual: f64,
    pub budget_mode: BudgetMode,
}

/// Makes `powers` satisfy every constraint: scale onto the budget, then raise
/// users in decoding order to their requirements, a few rounds. Falls back to
/// the minimum-power allocation, scaled up to the budget in exact mode.
pub(crate) fn project_feasible(
    powers: &[f64],
    channel: &ChannelState,
    qos: &QosSpec,
    order: &[usize],
    min_powers: &[f64],
    max_power_w: f64,
    mode: BudgetMode,
    floor: f64,
) -> Vec<f64> {
    let mut p: Vec<f64> = powers.iter().map(|v| v.max(floor)).collect();
    let fits = |p: &[f64]| {
        let s: f64 = p.iter().sum();
        match mode {
            BudgetMode::AtMost => s <= max_power_w * (1.0 + 1e-12),
            BudgetMode::Exact => (s - max_power_w).abs() <= 1e-9 * max_power_w,
        }
    };
    for _ in 0..50 {
        let s: f64 = p.iter().sum();
        if mode == BudgetMode::Exact || s > max_power_w {
            let scale = max_power_w / s;
            p.iter_mut().for_each(|v| *v *= scale);
        }
        let mut earlier = 0.0;
        let mut raised = false;
        for &k in order {
            let req = (qos.omega[k] - 1.0) * (earlier + qos.noise_term(channel.composite_gain[k]));
            if p[k] < req {
                p[k] = req;
                raised = true;
            }
            earlier += p[k];
        }
        if !raised && fits(&p) {
            return p;
        }
    }
    let mut p: Vec<f64> = min_powers.iter().map(|v| v.max(floor)).collect();
    if mode == BudgetMode::Exact {
        let scale = max_power_w / p.iter().sum::<f64>();
        p.iter_mut().for_each(|v| *v *= scale);
    }
    p
}

struct Candidate {
    powers: Vec<f64>,
    ee: f64,
    inner: InnerSolution,
    q: f64,
    price: f64,
}

/// Maximises the lower-bound energy efficiency subject to the per-user QoS
/// constraints and the power budget.
pub fn solve_ee(
    channel: &ChannelState,
    qos: &QosSpec,
    params: &LinkParams,
    max_power_w: f64,
    config: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    config.validate()?;
    let k = channel.num_users();
    if k == 0 {
        return Err(Error::invalid("channel", "needs at least one user").into());
    }
    if params.num_antennas != channel.num_antennas() {
        return Err(Error::DimensionMismatch {
            what: "antennas",
            expected: channel.num_antennas(),
            actual: params.num_antennas,
        }
        .into());
    }
    if !(max_power_w > 0.0) {
        return Err(Error::invalid("max_power_w", "must be positive").into());
    }
    let gate = check_feasibility(channel, qos, max_power_w)?;
    if !gate.feasible {
        return Err(SolverError::InfeasibleInput {
            required_total_w: gate.required_total_w,
            max_power_w,
        });
    }
    let order = &gate.order;
    let budget = (config.budget_mode == BudgetMode::AtMost).then_some(max_power_w);
    let problem = LogProblem::new(channel, qos, params, order, budget);
    let ctx = InnerContext {
        problem: &problem,
        channel,
        qos,
        order,
        max_power_w,
        config,
    };
    let rate_unit = params.bandwidth_hz / LN_2;
    let ee_of = |p: &[f64]| -> Result<f64, SolverError> {
        Ok(lower_bound_energy_efficiency(&PowerAllocation::new(p.to_vec())?, channel, params)?)
    };
    let project = |p: &[f64]| {
        project_feasible(
            p,
            channel,
            qos,
            order,
            &gate.required_powers_w,
            max_power_w,
            config.budget_mode,
            config.power_floor_w,
        )
    };

    let start = InnerSolution {
        x: gate
            .required_powers_w
            .iter()
            .map(|&p| p.max(1e-3 * max_power_w / k as f64).ln())
            .collect(),
        prices: DualPrices::zeros(k),
        converged: false,
    };

    // In exact mode the radiated power is fixed, so the parametric optimum
    // does not depend on q and one solve serves every bisection step.
    let exact = match config.budget_mode {
        BudgetMode::Exact => {
            let (inner, price) = ctx.solve_exact_budget(start.clone())?;
            let powers = project(&inner.powers());
            Some(Candidate {
                ee: ee_of(&powers)?,
                powers,
                inner,
                q: 0.0,
                price,
            })
        }
        BudgetMode::AtMost => None,
    };

    let mut warm = start;
    let mut evaluate = |q: f64| -> Result<Candidate, SolverError> {
        if let Some(c) = &exact {
            return Ok(Candidate {
                powers: c.powers.clone(),
                ee: c.ee,
                inner: c.inner.clone(),
                q,
                price: c.price,
            });
        }
        let price = q / rate_unit;
        let inner = ctx.solve(price, &warm)?;
        warm = inner.clone();
        let powers = project(&inner.powers());
        Ok(Candidate {
            ee: ee_of(&powers)?,
            powers,
            inner,
            q,
            price,
        })
    };

    let min_gain = channel.composite_gain.iter().copied().fold(f64::INFINITY, f64::min);
    let mut upper = params.bandwidth_hz * min_gain / (params.snr_gap * params.noise_power_w * LN_2);
    let mut lower = 0.0;
    let mut best: Option<Candidate> = None;
    let keep_best = |c: Candidate, best: &mut Option<Candidate>| {
        if best.as_ref().is_none_or(|b| c.ee > b.ee) {
            *best = Some(c);
        }
    };

    // the closed-form upper end is a heuristic; grow it until it fails
    for _ in 0..200 {
        let c = evaluate(upper)?;
        let reached = c.ee >= upper;
        keep_best(c, &mut best);
        if !reached {
            break;
        }
        lower = upper;
        upper *= 2.0;
    }

    let mut trace = Vec::new();
    let tol_at = |lower: f64, upper: f64| config.bisection_rel_tol * lower.max(upper * 1e-12);
    let mut closed = upper - lower <= tol_at(lower, upper);
    let mut last_converged = true;
    let mut next_q = None;
    for _ in 0..config.max_bisection_iters {
        if closed {
            break;
        }
        let q = next_q
            .take()
            .filter(|&q| q > lower && q < upper)
            .unwrap_or(0.5 * (lower + upper));
        let c = evaluate(q)?;
        if c.ee >= q {
            lower = q;
        } else {
            upper = q;
        }
        last_converged = c.inner.converged;
        // F(0) <= F(q) + q (P_max + P_c): once that bound is negative no
        // allocation has a nonnegative rate
        if lower == 0.0 && c.inner.converged {
            let inner = PowerAllocation::new(c.inner.powers())?;
            let rate = lower_bound_sum_rate(&inner, channel, params)?;
            let spare = max_power_w - inner.total_w;
            if rate + q * spare < 0.0 {
                keep_best(c, &mut best);
                let best = best.expect("just stored");
                return Err(SolverError::NegativeEfficiency {
                    best_ee: best.ee,
                    powers: best.powers,
                });
            }
            if rate < 0.0 {
                // aim below the q at which the bound would have held
                next_q = Some(-0.5 * rate / spare);
            }
        }
        trace.push(BisectionStep {
            q,
            realized_ee: c.ee,
            lower,
            upper,
        });
        keep_best(c, &mut best);
        closed = upper - lower <= tol_at(lower, upper);
    }

    let best = best.expect("at least one evaluation");
    if best.ee < 0.0 {
        return Err(SolverError::NegativeEfficiency {
            best_ee: best.ee,
            powers: best.powers,
        });
    }
    let q_star = 0.5 * (lower + upper);
    let alloc = PowerAllocation::new(best.powers.clone())?;
    let rate = lower_bound_sum_rate(&alloc, channel, params)?;
    let denom = alloc.total_w + params.total_circuit_power_w();

    let inner_powers = best.inner.powers();
    let (budget_theta, lambda) = best.inner.prices.to_power_domain(&inner_powers, params);
    let theta = match config.budget_mode {
        BudgetMode::AtMost => budget_theta,
        BudgetMode::Exact => best.price * rate_unit - best.q,
    };
    let residual = stationarity_residual(
        Multipliers {
            q: best.q,
            theta,
            lambda: &lambda,
        },
        &inner_powers,
        channel,
        qos,
        params,
        config.chi_variant,
    );
    let scale = inner_powers
        .iter()
        .map(|p| params.bandwidth_hz / (LN_2 * p))
        .fold(0.0, f64::max);
    let stationarity = residual.iter().fold(0.0f64, |m, r| m.max(r.abs())) / scale;

    Ok(SolverResult {
        achieved_ee: best.ee,
        powers_w: best.powers,
        q_star,
        theta,
        lambda,
        converged: closed && last_converged && best.inner.converged,
        bisection_trace: trace,
        bisection_tol: (upper - lower).max(tol_at(lower, upper)),
        parametric_residual: rate - q_star * denom,
        stationarity_residual: stationarity,
        budget_mode: config.budget_mode,
    })
}
