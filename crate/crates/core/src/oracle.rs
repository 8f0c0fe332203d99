//! Brute-force references for small instances: a grid search over the power
//! box, a one-dimensional golden-section search, and exhaustive admission.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::link::{lower_bound_energy_efficiency, LinkParams, PowerAllocation};
use crate::qos::{decode_order, requirements_at, QosSpec};
use crate::solver::BudgetMode;

pub const MAX_GRID_USERS: usize = 4;
pub const MAX_EXHAUSTIVE_USERS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_dim: usize,
    pub log_spaced: bool,
    pub min_power_w: f64,
    pub max_power_w: f64,
    pub budget_mode: BudgetMode,
}

impl GridSpec {
    /// Log-spaced grid over `[1e-6, max_power_w]` with an inequality budget.
    pub fn new(points_per_dim: usize, max_power_w: f64) -> Self {
        Self {
            points_per_dim,
            log_spaced: true,
            min_power_w: 1e-6,
            max_power_w,
            budget_mode: BudgetMode::AtMost,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_dim < 2 {
            return Err(Error::invalid("points_per_dim", "must be at least 2"));
        }
        if !(self.min_power_w > 0.0 && self.min_power_w < self.max_power_w && self.max_power_w.is_finite()) {
            return Err(Error::invalid("min_power_w", "need 0 < min_power_w < max_power_w"));
        }
        Ok(())
    }

    fn axis(&self, lo: f64, hi: f64) -> Vec<f64> {
        let n = self.points_per_dim;
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if self.log_spaced {
                    (lo.ln() + t * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + t * (hi - lo)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub powers_w: Vec<f64>,
    pub ee: f64,
}

struct Scored {
    ee: f64,
    powers: Vec<f64>,
    index: Vec<usize>,
}

/// Higher efficiency wins; ties go to the lexicographically smaller powers,
/// so the reduction does not depend on evaluation order.
fn better(a: Option<Scored>, b: Option<Scored>) -> Option<Scored> {
    match (a, b) {
        (Some(a), Some(b)) => {
            let a_wins = match a.ee.total_cmp(&b.ee) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => {
                    a.powers
                        .iter()
                        .zip(&b.powers)
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .is_le()
                }
            };
            Some(if a_wins { a } else { b })
        }
        (a, None) => a,
        (None, b) => b,
    }
}

struct GridProblem<'a> {
    channel: &'a ChannelState,
    qos: &'a QosSpec,
    params: &'a LinkParams,
    order: Vec<usize>,
    budget: f64,
    mode: BudgetMode,
}

impl GridProblem<'_> {
    fn score(&self, mut powers: Vec<f64>, index: Vec<usize>) -> Option<Scored> {
        let total: f64 = powers.iter().sum();
        match self.mode {
            BudgetMode::AtMost => {
                if total > self.budget {
                    return None;
                }
            }
            BudgetMode::Exact => {
                let scale = self.budget / total;
                powers.iter_mut().for_each(|p| *p *= scale);
            }
        }
        if !satisfies_qos(&powers, self.channel, self.qos, &self.order) {
            return None;
        }
        let alloc = PowerAllocation::new(powers.clone()).ok()?;
        let ee = lower_bound_energy_efficiency(&alloc, self.channel, self.params).ok()?;
        Some(Scored { ee, powers, index })
    }

    fn search(&self, axes: &[Vec<f64>]) -> Option<Scored> {
        let k = axes.len();
        let n = axes[0].len();
        let total = n.pow(k as u32);
        let eval = |flat: usize| {
            let mut rest = flat;
            let mut index = vec![0; k];
            for slot in index.iter_mut().rev() {
                *slot = rest % n;
                rest /= n;
            }
            let powers = index.iter().zip(axes).map(|(&i, axis)| axis[i]).collect();
            self.score(powers, index)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..total).into_par_iter().map(eval).reduce(|| None, better)
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..total).map(eval).fold(None, better)
        }
    }
}

fn satisfies_qos(powers: &[f64], channel: &ChannelState, qos: &QosSpec, order: &[usize]) -> bool {
    match requirements_at(powers, channel, qos, order) {
        Ok(req) => powers.iter().zip(&req).all(|(p, r)| *p >= *r),
        Err(_) => false,
    }
}

/// Best lower-bound efficiency on a `points_per_dim^K` grid over the power
/// box, refined once on a grid of the same size spanning two cells either
/// side of the incumbent. In exact-budget mode every grid point is scaled
/// onto `sum p = max_power_w` before it is scored.
pub fn grid_search_ee(
    channel: &ChannelState,
    qos: &QosSpec,
    params: &LinkParams,
    max_power_w: f64,
    grid: &GridSpec,
) -> Result<GridOptimum> {
    grid.validate()?;
    let k = channel.num_users();
    if k > MAX_GRID_USERS {
        return Err(Error::TooManyUsers {
            max: MAX_GRID_USERS,
            actual: k,
        });
    }
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
    let problem = GridProblem {
        channel,
        qos,
        params,
        order: decode_order(channel),
        budget: max_power_w,
        mode: grid.budget_mode,
    };
    let coarse_axis = grid.axis(grid.min_power_w, grid.max_power_w);
    let coarse = problem
        .search(&vec![coarse_axis.clone(); k])
        .ok_or(Error::NoFeasibleGridPoint)?;

    let n = grid.points_per_dim;
    let fine_axes: Vec<Vec<f64>> = coarse
        .index
        .iter()
        .map(|&i| grid.axis(coarse_axis[i.saturating_sub(2)], coarse_axis[(i + 2).min(n - 1)]))
        .collect();
    let best = better(Some(coarse), problem.search(&fine_axes)).expect("coarse optimum exists");

    // every filter is re-checked on the way out
    let total: f64 = best.powers.iter().sum();
    debug_assert!(satisfies_qos(&best.powers, channel, qos, &problem.order));
    debug_assert!(grid.budget_mode == BudgetMode::Exact || total <= max_power_w);
    Ok(GridOptimum {
        powers_w: best.powers,
        ee: best.ee,
    })
}

/// Single-user efficiency maximised by golden-section search in `ln p` over
/// `[max(P_req, 1e-15 P_max), P_max]`. The lower-bound rate is concave in
/// `p`, so the ratio is unimodal.
pub fn golden_section_ee(
    channel: &ChannelState,
    qos: &QosSpec,
    params: &LinkParams,
    max_power_w: f64,
) -> Result<GridOptimum> {
    if channel.num_users() != 1 {
        return Err(Error::invalid("channel", "golden-section oracle needs exactly one user"));
    }
    if !(max_power_w > 0.0) {
        return Err(Error::invalid("max_power_w", "must be positive"));
    }
    let required = (qos.omega[0] - 1.0) * qos.noise_term(channel.composite_gain[0]);
    if required > max_power_w {
        return Err(Error::NoFeasibleGridPoint);
    }
    let ee = |lnp: f64| -> Result<f64> {
        lower_bound_energy_efficiency(&PowerAllocation::new(vec![lnp.exp()])?, channel, params)
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = required.max(1e-15 * max_power_w).ln();
    let mut b = max_power_w.ln();
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (ee(c)?, ee(d)?);
    while b - a > 1e-12 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ee(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ee(d)?;
        }
    }
    // the optimum may sit on either end of the interval
    let candidates = [a, 0.5 * (a + b), b, required.max(1e-15 * max_power_w).ln(), max_power_w.ln()];
    let mut best = (f64::NEG_INFINITY, a);
    for x in candidates {
        let v = ee(x)?;
        if v > best.0 {
            best = (v, x);
        }
    }
    Ok(GridOptimum {
        powers_w: vec![best.1.exp().min(max_power_w)],
        ee: best.0,
    })
}

/// Largest number of users that can be served together within the budget,
/// by checking every subset with its members in decoding order.
pub fn exhaustive_admission(channel: &ChannelState, qos: &QosSpec, max_power_w: f64) -> Result<usize> {
    let k = channel.num_users();
    if k > MAX_EXHAUSTIVE_USERS {
        return Err(Error::TooManyUsers {
            max: MAX_EXHAUSTIVE_USERS,
            actual: k,
        });
    }
    if qos.len() != k {
        return Err(Error::DimensionMismatch {
            what: "QoS entries",
            expected: k,
            actual: qos.len(),
        });
    }
    let order = decode_order(channel);
    let mut best = 0;
    for mask in 0u32..(1 << k) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let mut total = 0.0;
        let fits = order.iter().filter(|&&u| mask & (1 << u) != 0).all(|&u| {
            total += (qos.omega[u] - 1.0) * (total + qos.noise_term(channel.composite_gain[u]));
            total <= max_power_w
        });
        if fits {
            best = size;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admission::admit_users;
    use crate::qos::tests::gain_channel;
    use approx::assert_relative_eq;

    fn params(m: usize) -> LinkParams {
        LinkParams::new(120e3, 1e-20, 5e-3 / m as f64, m, 1e-3).unwrap()
    }

    #[test]
    fn grid_and_golden_section_agree_for_one_user() {
        let ch = gain_channel(&[1e-8]);
        let p = params(1);
        let qos = QosSpec::uniform(1, 1.0, QosSpec::default_qos_snr(p.noise_power_w)).unwrap();
        let golden = golden_section_ee(&ch, &qos, &p, 1.0).unwrap();
        let spec = GridSpec {
            points_per_dim: 10_000,
            min_power_w: 1e-9,
            ..GridSpec::new(10_000, 1.0)
        };
        let grid = grid_search_ee(&ch, &qos, &p, 1.0, &spec).unwrap();
        assert_relative_eq!(grid.ee, golden.ee, max_relative = 1e-3);
        assert!(grid.ee <= golden.ee * (1.0 + 1e-9));
    }

    #[test]
    fn infeasible_region_is_reported() {
        let ch = gain_channel(&[1.0, 0.5]);
        let p = params(1);
        let qos = QosSpec::uniform(2, 1.0, 1.0).unwrap();
        let spec = GridSpec::new(20, 1.0);
        assert_eq!(
            grid_search_ee(&ch, &qos, &p, 1.0, &spec),
            Err(Error::NoFeasibleGridPoint)
        );
    }

    #[test]
    fn grid_rejects_too_many_users() {
        let ch = gain_channel(&[1.0; 5]);
        let p = params(1);
        let qos = QosSpec::uniform(5, 0.0, 1.0).unwrap();
        assert!(matches!(
            grid_search_ee(&ch, &qos, &p, 1.0, &GridSpec::new(3, 1.0)),
            Err(Error::TooManyUsers { max: 4, actual: 5 })
        ));
        let ch = gain_channel(&[1.0; 13]);
        let qos = QosSpec::uniform(13, 0.0, 1.0).unwrap();
        assert!(matches!(
            exhaustive_admission(&ch, &qos, 1.0),
            Err(Error::TooManyUsers { max: 12, actual: 13 })
        ));
    }

    #[test]
    fn grid_result_respects_constraints_and_refining_helps() {
        let ch = gain_channel(&[3e-8, 1e-8]);
        let p = params(1);
        let qos = QosSpec::uniform(2, 1.0, QosSpec::default_qos_snr(p.noise_power_w)).unwrap();
        let coarse = grid_search_ee(&ch, &qos, &p, 1.0, &GridSpec { min_power_w: 1e-10, ..GridSpec::new(40, 1.0) }).unwrap();
        let fine = grid_search_ee(&ch, &qos, &p, 1.0, &GridSpec { min_power_w: 1e-10, ..GridSpec::new(80, 1.0) }).unwrap();
        let order = decode_order(&ch);
        for r in [&coarse, &fine] {
            assert!(r.powers_w.iter().sum::<f64>() <= 1.0);
            assert!(satisfies_qos(&r.powers_w, &ch, &qos, &order));
        }
        // the doubled axis contains the coarse one
        let coarse_only = grid_search_ee(&ch, &qos, &p, 1.0, &GridSpec { min_power_w: 1e-10, ..GridSpec::new(41, 1.0) }).unwrap();
        let doubled = grid_search_ee(&ch, &qos, &p, 1.0, &GridSpec { min_power_w: 1e-10, ..GridSpec::new(81, 1.0) }).unwrap();
        assert!(doubled.ee >= coarse_only.ee * (1.0 - 1e-3));
    }

    #[test]
    fn exact_budget_grid_spends_everything() {
        let ch = gain_channel(&[3e-8, 1e-8]);
        let p = params(1);
        let qos = QosSpec::uniform(2, 0.5, QosSpec::default_qos_snr(p.noise_power_w)).unwrap();
        let spec = GridSpec {
            budget_mode: BudgetMode::Exact,
            min_power_w: 1e-4,
            ..GridSpec::new(50, 2.0)
        };
        let r = grid_search_ee(&ch, &qos, &p, 2.0, &spec).unwrap();
        assert_relative_eq!(r.powers_w.iter().sum::<f64>(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn exhaustive_admission_examples() {
        let ch = gain_channel(&[1.0, 0.5, 0.25]);
        let free = QosSpec::uniform(3, 0.0, 1.0).unwrap();
        assert_eq!(exhaustive_admission(&ch, &free, 0.0).unwrap(), 3);
        let paid = QosSpec::uniform(3, 1.0, 1.0).unwrap();
        assert_eq!(exhaustive_admission(&ch, &paid, 0.0).unwrap(), 0);
        // user 0 costs 1, then user 1 costs 1 + 2 = 3: four watts admit two
        assert_eq!(exhaustive_admission(&ch, &paid, 4.0).unwrap(), 2);
        assert_eq!(admit_users(&ch, &paid, 4.0).unwrap().admitted_count, 2);
    }

    #[test]
    fn exhaustive_beats_greedy_with_mixed_targets() {
        // the strong user has a huge target; serving the two weak ones instead is better
        let ch = gain_channel(&[1.0, 0.5, 0.5]);
        let qos = QosSpec::new(vec![3.0, 0.5, 0.5], 1.0).unwrap();
        let greedy = admit_users(&ch, &qos, 7.5).unwrap().admitted_count;
        let best = exhaustive_admission(&ch, &qos, 7.5).unwrap();
        assert!(best >= greedy);
        assert_eq!(best, 2);
    }
}
