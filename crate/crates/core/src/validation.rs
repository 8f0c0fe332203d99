//! Oracle cross-checks on small instances, as run by `mimo-ee validate`.

use serde::Serialize;

use crate::admission::admit_users;
use crate::channel::{build_channel, ChannelState};
use crate::config::SystemConfig;
use crate::error::Error;
use crate::link::LinkParams;
use crate::oracle::{exhaustive_admission, golden_section_ee, grid_search_ee, GridSpec};
use crate::qos::{check_feasibility, decode_order, max_qos_violation, QosSpec};
use crate::solver::solve_ee;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Smallest grid power used by the cross-checks. Optimal powers at the
/// default geometry span roughly 1e-8 to 1e-3 W.
pub const GRID_MIN_POWER_W: f64 = 1e-9;

struct Instance {
    channel: ChannelState,
    qos: QosSpec,
    params: LinkParams,
}

/// Feasible instances with `k` users drawn from consecutive seeds.
fn feasible_instances(system: &SystemConfig, k: usize, seed: u64, count: usize) -> Result<Vec<Instance>, Error> {
    let mut sys = system.clone();
    sys.num_users = k;
    let qos = sys.qos_spec()?;
    let params = sys.link_params()?;
    let mut out = Vec::new();
    for s in seed..seed + 100 * count as u64 {
        if out.len() == count {
            break;
        }
        let channel = build_channel(&sys.geometry, sys.num_antennas, k, s)?;
        if check_feasibility(&channel, &qos, sys.max_power_w)?.feasible {
            out.push(Instance {
                channel,
                qos: qos.clone(),
                params,
            });
        }
    }
    Ok(out)
}

fn grid_check(system: &SystemConfig, k: usize, points: usize, count: usize, seed: u64) -> Result<Check, Error> {
    let mut worst = 0.0f64;
    let mut failures = 0;
    let instances = feasible_instances(system, k, seed, count)?;
    for inst in &instances {
        let grid = GridSpec {
            min_power_w: GRID_MIN_POWER_W,
            ..GridSpec::new(points, system.max_power_w)
        };
        let oracle = grid_search_ee(&inst.channel, &inst.qos, &inst.params, system.max_power_w, &grid)?;
        match solve_ee(&inst.channel, &inst.qos, &inst.params, system.max_power_w, &system.solver) {
            Ok(r) => {
                let gap = (r.achieved_ee - oracle.ee) / oracle.ee;
                worst = worst.max(gap.abs());
                if gap.abs() > 0.01 {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    Ok(Check {
        name: format!("solver vs {points}-point grid, K={k}"),
        passed: failures == 0 && !instances.is_empty(),
        detail: format!("{} instances, worst relative gap {:.2e}", instances.len(), worst),
    })
}

/// Runs every check; channel seeds start at `seed`.
pub fn run_validation(system: &SystemConfig, seed: u64) -> Result<ValidationReport, Error> {
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    let singles = feasible_instances(system, 1, seed, 5)?;
    let mut ok = !singles.is_empty();
    for inst in &singles {
        let oracle = golden_section_ee(&inst.channel, &inst.qos, &inst.params, system.max_power_w)?;
        match solve_ee(&inst.channel, &inst.qos, &inst.params, system.max_power_w, &system.solver) {
            Ok(r) => {
                let gap = ((r.achieved_ee - oracle.ee) / oracle.ee).abs();
                worst = worst.max(gap);
                ok &= gap <= 5e-3;
            }
            Err(_) => ok = false,
        }
    }
    checks.push(Check {
        name: "solver vs golden section, K=1".into(),
        passed: ok,
        detail: format!("{} instances, worst relative gap {:.2e}", singles.len(), worst),
    });

    checks.push(grid_check(system, 2, 200, 10, seed)?);
    checks.push(grid_check(system, 3, 60, 3, seed)?);

    let mut violations = 0;
    let many = feasible_instances(system, 3, seed, 50)?;
    for inst in &many {
        let order = decode_order(&inst.channel);
        match solve_ee(&inst.channel, &inst.qos, &inst.params, system.max_power_w, &system.solver) {
            Ok(r) => {
                let total: f64 = r.powers_w.iter().sum();
                let qos_gap = max_qos_violation(&r.powers_w, &inst.channel, &inst.qos, &order)?;
                if total > system.max_power_w * (1.0 + 1e-9) || qos_gap > 1e-6 {
                    violations += 1;
                }
            }
            Err(_) => violations += 1,
        }
    }
    checks.push(Check {
        name: "budget and QoS constraints, K=3".into(),
        passed: violations == 0 && !many.is_empty(),
        detail: format!("{} instances, {violations} violations", many.len()),
    });

    let mut sys = system.clone();
    sys.num_users = 4;
    let qos = sys.qos_spec()?;
    let (mut worse, mut equal) = (0, 0);
    let trials = 100;
    for s in seed..seed + trials {
        let channel = build_channel(&sys.geometry, sys.num_antennas, 4, s)?;
        // a budget that serves about half of the minimum requirement
        let need = check_feasibility(&channel, &qos, 0.0)?.required_total_w;
        let budget = 0.5 * need;
        let greedy = admit_users(&channel, &qos, budget)?.admitted_count;
        let best = exhaustive_admission(&channel, &qos, budget)?;
        if greedy > best {
            worse += 1;
        }
        if greedy == best {
            equal += 1;
        }
    }
    checks.push(Check {
        name: "greedy vs exhaustive admission, K=4".into(),
        passed: worse == 0,
        detail: format!("{trials} instances, {equal} equal, {worse} where greedy exceeded the optimum"),
    });

    Ok(ValidationReport { checks })
}
