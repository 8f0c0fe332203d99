//! Inner maximisation in log-power coordinates `x = ln p`.
//!
//! In these coordinates the lower-bound sum rate is concave and every
//! constraint is a concave log-sum-exp expression, so the Lagrangian for fixed
//! prices is maximised by damped Newton steps.

use nalgebra::{DMatrix, DVector};

use super::lagrangian::{log_slacks, step_prices, DualPrices};
use super::{BudgetMode, SolverConfig, SolverError};
use crate::channel::ChannelState;
use crate::link::LinkParams;
use crate::qos::QosSpec;

const X_MIN: f64 = -70.0;
const X_MAX: f64 = 14.0;
const ARMIJO: f64 = 1e-4;
const NEWTON_TOL: f64 = 1e-24;
const STEP_TOL: f64 = 1e-13;
const QUADRATIC_REGION: f64 = 1e-10;

struct QosRow {
    user: usize,
    prefix: Vec<usize>,
    ln_omega_m1: f64,
    noise: f64,
}

/// Log-domain view of one instance, with the decoding order fixed.
pub(crate) struct LogProblem {
    k: usize,
    rho: Vec<f64>,
    rows: Vec<QosRow>,
    budget: Option<f64>,
}

/// Adds `coef * ln(sum_{j in set} e^{x_j} + c)` and its derivatives.
fn add_lse(
    x: &[f64],
    set: impl Iterator<Item = usize> + Clone,
    c: f64,
    coef: f64,
    grad: Option<(&mut DVector<f64>, &mut DMatrix<f64>)>,
) -> f64 {
    let z: f64 = set.clone().map(|j| x[j].exp()).sum::<f64>() + c;
    if let Some((g, h)) = grad {
        let w: Vec<(usize, f64)> = set.map(|j| (j, x[j].exp() / z)).collect();
        for &(a, wa) in &w {
            g[a] += coef * wa;
            h[(a, a)] += coef * wa;
            for &(b, wb) in &w {
                h[(a, b)] -= coef * wa * wb;
            }
        }
    }
    coef * z.ln()
}

impl LogProblem {
    pub(crate) fn new(
        channel: &ChannelState,
        qos: &QosSpec,
        params: &LinkParams,
        order: &[usize],
        budget: Option<f64>,
    ) -> Self {
        let rho = channel
            .large_scale
            .iter()
            .map(|b| params.noise_power_w / b)
            .collect();
        let rows = order
            .iter()
            .enumerate()
            .filter(|(_, &u)| qos.omega[u] > 1.0)
            .map(|(pos, &u)| QosRow {
                user: u,
                prefix: order[..pos].to_vec(),
                ln_omega_m1: (qos.omega[u] - 1.0).ln(),
                noise: qos.noise_term(channel.composite_gain[u]),
            })
            .collect();
        Self {
            k: order.len(),
            rho,
            rows,
            budget: budget.map(f64::ln),
        }
    }

    /// Lagrangian `sum_k ln(p_k / (S - p_k + rho_k)) - price * S + sum nu h(x)`,
    /// with the gradient and Hessian when requested.
    fn lagrangian(
        &self,
        x: &[f64],
        price: f64,
        prices: &DualPrices,
        mut out: Option<(&mut DVector<f64>, &mut DMatrix<f64>)>,
    ) -> f64 {
        let k = self.k;
        let mut val = 0.0;
        if let Some((g, h)) = out.as_mut() {
            g.fill(0.0);
            h.fill(0.0);
        }
        for u in 0..k {
            val += x[u];
            if let Some((g, _)) = out.as_mut() {
                g[u] += 1.0;
            }
            let others = (0..k).filter(move |&j| j != u);
            val += add_lse(x, others, self.rho[u], -1.0, out.as_mut().map(|(g, h)| (&mut **g, &mut **h)));
            let p = x[u].exp();
            val -= price * p;
            if let Some((g, h)) = out.as_mut() {
                g[u] -= price * p;
                h[(u, u)] -= price * p;
            }
        }
        for row in &self.rows {
            let nu = prices.qos[row.user];
            if nu == 0.0 {
                continue;
            }
            val += nu * (x[row.user] - row.ln_omega_m1);
            if let Some((g, _)) = out.as_mut() {
                g[row.user] += nu;
            }
            val += add_lse(
                x,
                row.prefix.iter().copied(),
                row.noise,
                -nu,
                out.as_mut().map(|(g, h)| (&mut **g, &mut **h)),
            );
        }
        if let Some(ln_budget) = self.budget {
            let nu = prices.budget;
            if nu > 0.0 {
                val += nu * ln_budget;
                val += add_lse(x, 0..k, 0.0, -nu, out.as_mut().map(|(g, h)| (&mut **g, &mut **h)));
            }
        }
        val
    }

    /// Damped Newton ascent on the Lagrangian from `x`. Returns whether the
    /// Newton decrement fell below tolerance within `max_iters`.
    pub(crate) fn maximise(&self, x: &mut [f64], price: f64, prices: &DualPrices, max_iters: usize) -> bool {
        let k = self.k;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        let mut trial = vec![0.0; k];
        for _ in 0..max_iters {
            let val = self.lagrangian(x, price, prices, Some((&mut g, &mut h)));
            let Some(d) = newton_direction(&h, &g) else {
                return false;
            };
            let dec = g.dot(&d);
            let step = d.amax();
            if dec < NEWTON_TOL || step < STEP_TOL {
                return true;
            }
            if dec < QUADRATIC_REGION {
                // full steps converge quadratically here; the line search would
                // only see rounding noise
                for i in 0..k {
                    x[i] += d[i];
                }
                continue;
            }
            let mut t = 1.0;
            loop {
                for i in 0..k {
                    trial[i] = x[i] + t * d[i];
                }
                if trial.iter().all(|v| (X_MIN..=X_MAX).contains(v)) {
                    let next = self.lagrangian(&trial, price, prices, None);
                    if next >= val + ARMIJO * t * dec {
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-12 {
                    // no ascent possible at working precision
                    return false;
                }
            }
            x.copy_from_slice(&trial);
        }
        false
    }
}

#[derive(Clone, Copy)]
enum Constraint {
    Qos(usize),
    Budget,
}

impl LogProblem {
    /// Values `h(x) >= 0` of the priced constraints with their gradients.
    fn constraints(&self, x: &[f64]) -> Vec<(Constraint, f64, DVector<f64>)> {
        let k = self.k;
        let mut out = Vec::with_capacity(self.rows.len() + 1);
        for row in &self.rows {
            let z: f64 = row.prefix.iter().map(|&j| x[j].exp()).sum::<f64>() + row.noise;
            let mut g = DVector::zeros(k);
            g[row.user] = 1.0;
            for &j in &row.prefix {
                g[j] -= x[j].exp() / z;
            }
            out.push((Constraint::Qos(row.user), x[row.user] - row.ln_omega_m1 - z.ln(), g));
        }
        if let Some(ln_budget) = self.budget {
            let z: f64 = x.iter().map(|v| v.exp()).sum();
            let g = DVector::from_iterator(k, x.iter().map(|v| -v.exp() / z));
            out.push((Constraint::Budget, ln_budget - z.ln(), g));
        }
        out
    }

    /// Newton direction for the dual function at the maximiser `x` of the
    /// Lagrangian. Its gradient is `h(x)` and its Hessian `J (-H)^-1 J^T`;
    /// constraints with zero price and positive slack are held at zero.
    fn dual_direction(&self, x: &[f64], price: f64, prices: &DualPrices) -> Option<DualPrices> {
        let k = self.k;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        self.lagrangian(x, price, prices, Some((&mut g, &mut h)));
        let free: Vec<_> = self
            .constraints(x)
            .into_iter()
            .filter(|(c, value, _)| {
                let nu = match c {
                    Constraint::Qos(u) => prices.qos[*u],
                    Constraint::Budget => prices.budget,
                };
                nu > 0.0 || *value < 0.0
            })
            .collect();
        if free.is_empty() {
            return None;
        }
        let chol = (-h).cholesky()?;
        let jt = DMatrix::from_columns(&free.iter().map(|(_, _, grad)| grad.clone()).collect::<Vec<_>>());
        let mut q = jt.transpose() * chol.solve(&jt);
        let ridge = 1e-12 * q.diagonal().amax().max(1e-300);
        for i in 0..q.nrows() {
            q[(i, i)] += ridge;
        }
        let slack = DVector::from_iterator(free.len(), free.iter().map(|(_, v, _)| *v));
        let step = q.cholesky()?.solve(&(-slack));
        let mut delta = DualPrices::zeros(k);
        for ((c, _, _), d) in free.iter().zip(step.iter()) {
            match c {
                Constraint::Qos(u) => delta.qos[*u] = *d,
                Constraint::Budget => delta.budget = *d,
            }
        }
        Some(delta)
    }
}

/// Solves `(-H) d = g`, adding a ridge if `-H` is not numerically positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let neg = -h;
    let scale = neg.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..20 {
        let mut m = neg.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            return Some(chol.solve(g));
        }
        ridge = if ridge == 0.0 { scale * 1e-12 } else { ridge * 10.0 };
    }
    None
}

/// Outcome of the multiplier loop at a fixed power price.
#[derive(Debug, Clone)]
pub(crate) struct InnerSolution {
    pub x: Vec<f64>,
    pub prices: DualPrices,
    pub converged: bool,
}

impl InnerSolution {
    pub(crate) fn powers(&self) -> Vec<f64> {
        self.x.iter().map(|v| v.exp()).collect()
    }
}

pub(crate) struct InnerContext<'a> {
    pub problem: &'a LogProblem,
    pub channel: &'a ChannelState,
    pub qos: &'a QosSpec,
    pub order: &'a [usize],
    pub max_power_w: f64,
    pub config: &'a SolverConfig,
}

impl InnerContext<'_> {
    fn violation(&self, powers: &[f64], prices: &DualPrices) -> Result<f64, SolverError> {
        let (budget, qos_slack) = log_slacks(powers, self.channel, self.qos, self.order, self.max_power_w)?;
        let term = |price: f64, slack: f64| if price > 0.0 { slack.abs() } else { (-slack).max(0.0) };
        let mut worst = match self.config.budget_mode {
            BudgetMode::AtMost => term(prices.budget, budget),
            BudgetMode::Exact => 0.0,
        };
        for (nu, slack) in prices.qos.iter().zip(&qos_slack) {
            if let Some(s) = slack {
                worst = worst.max(term(*nu, *s));
            }
        }
        Ok(worst)
    }

    /// Projected Newton step on the prices with backtracking. The step is
    /// accepted once the dual function decreases or the violation halves;
    /// `None` when no step length achieves either.
    fn dual_newton(
        &self,
        x: &[f64],
        price: f64,
        prices: &DualPrices,
    ) -> Result<Option<(Vec<f64>, DualPrices)>, SolverError> {
        let Some(delta) = self.problem.dual_direction(x, price, prices) else {
            return Ok(None);
        };
        let powers: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let violation = self.violation(&powers, prices)?;
        let dual = self.problem.lagrangian(x, price, prices, None);
        let mut t = 1.0;
        for _ in 0..30 {
            let trial = DualPrices {
                budget: (prices.budget + t * delta.budget).max(0.0),
                qos: prices.qos.iter().zip(&delta.qos).map(|(p, d)| (p + t * d).max(0.0)).collect(),
            };
            let mut xt = x.to_vec();
            if self.problem.maximise(&mut xt, price, &trial, self.config.max_inner_iters) {
                let pt: Vec<f64> = xt.iter().map(|v| v.exp()).collect();
                if self.problem.lagrangian(&xt, price, &trial, None) < dual
                    || self.violation(&pt, &trial)? < 0.5 * violation
                {
                    return Ok(Some((xt, trial)));
                }
            }
            t *= 0.5;
        }
        Ok(None)
    }

    /// Alternates Newton maximisation and price steps until complementary
    /// slackness holds to `multiplier_tol` in log terms.
    pub(crate) fn solve(&self, price: f64, warm: &InnerSolution) -> Result<InnerSolution, SolverError> {
        let mut x = warm.x.clone();
        let mut prices = warm.prices.clone();
        let k = x.len();
        let mut scale = DualPrices {
            budget: 1.0,
            qos: vec![1.0; k],
        };
        let mut last: Option<(f64, Vec<Option<f64>>)> = None;
        for it in 1..=self.config.max_multiplier_iters {
            let newton_ok = self.problem.maximise(&mut x, price, &prices, self.config.max_inner_iters);
            let powers: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            if newton_ok && self.violation(&powers, &prices)? < self.config.multiplier_tol {
                return Ok(InnerSolution {
                    x,
                    prices,
                    converged: true,
                });
            }
            if newton_ok {
                if let Some(next) = self.dual_newton(&x, price, &prices)? {
                    (x, prices) = next;
                    continue;
                }
            }
            let (budget_slack, qos_slack) = log_slacks(&powers, self.channel, self.qos, self.order, self.max_power_w)?;
            // a slack that flips sign means the step overshot the price
            if let Some((b, q)) = &last {
                if b * budget_slack < 0.0 {
                    scale.budget *= 0.5;
                }
                for u in 0..k {
                    if let (Some(a), Some(c)) = (q[u], qos_slack[u]) {
                        if a * c < 0.0 {
                            scale.qos[u] *= 0.5;
                        }
                    }
                }
            }
            // steps relative to the price itself, which can span many decades
            let relative = DualPrices {
                budget: scale.budget * prices.budget.max(1.0),
                qos: scale.qos.iter().zip(&prices.qos).map(|(c, nu)| c * nu.max(1.0)).collect(),
            };
            prices = step_prices(&prices, budget_slack, &qos_slack, &relative, self.config, it);
            last = Some((budget_slack, qos_slack));
        }
        Ok(InnerSolution {
            x,
            prices,
            converged: false,
        })
    }

    /// Finds the power price at which the unconstrained-budget optimum spends
    /// exactly `max_power_w`, by safeguarded regula falsi on `ln S` against `ln price`.
    pub(crate) fn solve_exact_budget(&self, warm: InnerSolution) -> Result<(InnerSolution, f64), SolverError> {
        let target = self.max_power_w.ln();
        let excess = |sol: &InnerSolution| sol.powers().iter().sum::<f64>().ln() - target;
        let mut ln_price = (self.problem.k as f64 / self.max_power_w).ln();
        let mut sol = self.solve(ln_price.exp(), &warm)?;
        let mut f = excess(&sol);
        let (mut lo, mut hi) = (None::<(f64, f64, InnerSolution)>, None::<(f64, f64, InnerSolution)>);
        // bracket: spending too much means the price is too low
        for _ in 0..200 {
            if f > 0.0 {
                lo = Some((ln_price, f, sol.clone()));
                if hi.is_some() {
                    break;
                }
                ln_price += 2.0;
            } else {
                hi = Some((ln_price, f, sol.clone()));
                if lo.is_some() {
                    break;
                }
                ln_price -= 2.0;
            }
            sol = self.solve(ln_price.exp(), &sol)?;
            f = excess(&sol);
        }
        let (Some(mut lo), Some(mut hi)) = (lo, hi) else {
            return Err(SolverError::NoConvergence {
                reason: "could not bracket the power price".into(),
            });
        };
        let mut side = 0i8;
        for _ in 0..200 {
            let (a, fa) = (lo.0, lo.1);
            let (b, fb) = (hi.0, hi.1);
            let mut c = a - fa * (b - a) / (fb - fa);
            if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
                c = 0.5 * (a + b);
            }
            let warm = if fa.abs() < fb.abs() { &lo.2 } else { &hi.2 };
            let s = self.solve(c.exp(), warm)?;
            let fc = excess(&s);
            if fc.abs() < 1e-12 || (b - a).abs() < 1e-13 {
                return Ok((s, c.exp()));
            }
            // Illinois modification keeps both ends moving
            if fc > 0.0 {
                lo = (c, fc, s);
                if side == 1 {
                    hi.1 *= 0.5;
                }
                side = 1;
            } else {
                hi = (c, fc, s);
                if side == -1 {
                    lo.1 *= 0.5;
                }
                side = -1;
            }
        }
        let best = if lo.1.abs() < hi.1.abs() { lo } else { hi };
        Ok((best.2, best.0.exp()))
    }
}
