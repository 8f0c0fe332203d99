//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mimo_ee::admission::admit_users;
use mimo_ee::channel::{build_channel, large_scale_gain, sample_geometry, sample_small_scale, ChannelState, GeometryConfig};
use mimo_ee::config::{CircuitPowerScope, ExperimentConfig, MinRate, Sweep, SweepVariable, SystemConfig};
use mimo_ee::experiment::run_sweep;
use mimo_ee::link::{asymptotic_sinr, exact_sinr, lower_bound_energy_efficiency, LinkParams, PowerAllocation};
use mimo_ee::oracle::{exhaustive_admission, grid_search_ee, GridSpec};
use mimo_ee::qos::{check_feasibility, decode_order, max_qos_violation, QosSpec};
use mimo_ee::solver::{solve_ee, BudgetMode, SolverError, SolverResult};
use mimo_ee::validation::GRID_MIN_POWER_W;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn table_one() -> SystemConfig {
    SystemConfig::default()
}

fn instance(sys: &SystemConfig, seed: u64) -> (ChannelState, QosSpec, LinkParams) {
    let ch = build_channel(&sys.geometry, sys.num_antennas, sys.num_users, seed).unwrap();
    (ch, sys.qos_spec().unwrap(), sys.link_params().unwrap())
}

fn dinkelbach_ok(r: &SolverResult, params: &LinkParams) -> bool {
    let d = r.powers_w.iter().sum::<f64>() + params.total_circuit_power_w();
    r.parametric_residual.abs() <= 10.0 * r.bisection_tol * (d + 1.0)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut passed = true;
    for (k, points) in [(2usize, 200usize), (3, 60)] {
        let sys = SystemConfig {
            num_users: k,
            ..table_one()
        };
        let (mut n, mut worst, mut misses) = (0, 0.0f64, 0);
        let mut seed = 0;
        while n < 100 {
            let (ch, qos, params) = instance(&sys, seed);
            seed += 1;
            if !check_feasibility(&ch, &qos, sys.max_power_w).unwrap().feasible {
                continue;
            }
            n += 1;
            let grid = GridSpec {
                min_power_w: GRID_MIN_POWER_W,
                ..GridSpec::new(points, sys.max_power_w)
            };
            let oracle = grid_search_ee(&ch, &qos, &params, sys.max_power_w, &grid).unwrap();
            let r = solve_ee(&ch, &qos, &params, sys.max_power_w, &sys.solver).unwrap();
            let gap = (r.achieved_ee - oracle.ee).abs() / oracle.ee;
            worst = worst.max(gap);
            if gap > 0.01 {
                misses += 1;
            }
        }
        passed &= misses == 0;
        lines.push(format!("K={k} ({points} pts): {n} channels, worst gap {worst:.2e}, {misses} over 1%"));
    }
    let secs = start.elapsed().as_secs_f64();
    passed &= secs <= 300.0;
    lines.push(format!("{secs:.1} s"));
    outcome(passed, lines.join("; "))
}

/// Random feasible instances with varied user counts, targets and budgets.
fn random_feasible(count: usize, seed: u64) -> Vec<(SystemConfig, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let sys = SystemConfig {
            num_users: rng.random_range(1..=6),
            num_antennas: [32, 64, 128][rng.random_range(0..3)],
            min_spectral_eff: MinRate::Uniform(rng.random_range(0.0..3.0)),
            max_power_w: 10f64.powf(rng.random_range(-3.0..1.0)),
            ..table_one()
        };
        let channel_seed = rng.random();
        let (ch, qos, _) = instance(&sys, channel_seed);
        if check_feasibility(&ch, &qos, sys.max_power_w).unwrap().feasible {
            out.push((sys, channel_seed));
        }
    }
    out
}

fn dinkelbach_root() -> Outcome {
    let (mut converged, mut bad, mut negative, mut other) = (0, 0, 0, 0);
    for (sys, seed) in random_feasible(500, 21) {
        let (ch, qos, params) = instance(&sys, seed);
        match solve_ee(&ch, &qos, &params, sys.max_power_w, &sys.solver) {
            Ok(r) if r.converged => {
                converged += 1;
                if !dinkelbach_ok(&r, &params) {
                    bad += 1;
                }
            }
            Err(SolverError::NegativeEfficiency { .. }) => negative += 1,
            _ => other += 1,
        }
    }
    outcome(
        bad == 0 && other == 0,
        format!(
            "{converged} converged with {bad} residuals over bound; {negative} with negative optimal efficiency, {other} other"
        ),
    )
}

fn constraint_satisfaction() -> Outcome {
    let (mut budget_bad, mut qos_bad, mut errors, mut worst_qos) = (0, 0, 0, 0.0f64);
    let instances = random_feasible(1000, 31);
    for (sys, seed) in &instances {
        let (ch, qos, params) = instance(sys, *seed);
        let powers = match solve_ee(&ch, &qos, &params, sys.max_power_w, &sys.solver) {
            Ok(r) => r.powers_w,
            Err(SolverError::NegativeEfficiency { powers, .. }) => powers,
            Err(_) => {
                errors += 1;
                continue;
            }
        };
        if powers.iter().sum::<f64>() > sys.max_power_w * (1.0 + 1e-9) {
            budget_bad += 1;
        }
        let v = max_qos_violation(&powers, &ch, &qos, &decode_order(&ch)).unwrap();
        worst_qos = worst_qos.max(v);
        if v > 1e-6 {
            qos_bad += 1;
        }
    }
    outcome(
        budget_bad == 0 && qos_bad == 0 && errors == 0,
        format!(
            "{} instances, {budget_bad} over budget, {qos_bad} QoS misses, {errors} errors, worst shortfall {worst_qos:.1e} W",
            instances.len()
        ),
    )
}

fn sweep(base: SystemConfig, variable: SweepVariable, values: &[f64], trials: usize) -> Vec<mimo_ee::experiment::SweepRow> {
    let config = ExperimentConfig {
        system: base,
        sweep: Some(Sweep {
            variable,
            values: values.to_vec(),
        }),
        num_trials: trials,
        master_seed: 2024,
        output_path: None,
    };
    run_sweep(&config).unwrap()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" > ")
}

fn transmit_power_trend() -> Outcome {
    let mut base = table_one();
    base.solver.budget_mode = BudgetMode::Exact;
    let rows = sweep(base, SweepVariable::MaxPowerW, &[2.0, 3.0, 4.0], 200);
    let ee: Vec<f64> = rows.iter().map(|r| r.mean_ee_bit_per_j).collect();
    let all_feasible = rows.iter().all(|r| r.feasibility_rate == 1.0);
    outcome(
        strictly_decreasing(&ee) && all_feasible,
        format!("whole budget radiated, 200 trials: {} bit/J", fmt(&ee)),
    )
}

fn circuit_and_antenna_trends() -> Outcome {
    let rows = sweep(table_one(), SweepVariable::CircuitPowerDbm, &[1.0, 4.0, 7.0, 10.0], 200);
    let pc: Vec<f64> = rows.iter().map(|r| r.mean_ee_bit_per_j).collect();

    // fixed total circuit power of 7 dBm
    let rows = sweep(table_one(), SweepVariable::NumAntennas, &[32.0, 128.0], 200);
    let (m32, m128) = (rows[0].mean_ee_bit_per_j, rows[1].mean_ee_bit_per_j);

    // fixed per-antenna share of 7 dBm / 128, reported only
    let per_antenna = SystemConfig {
        circuit_power_w: table_one().circuit_power_per_antenna_w(),
        circuit_power_scope: CircuitPowerScope::PerAntenna,
        ..table_one()
    };
    let rows = sweep(per_antenna, SweepVariable::NumAntennas, &[32.0, 64.0, 128.0, 256.0], 200);
    let pa: Vec<String> = rows
        .iter()
        .map(|r| format!("M={}: {:.3e}", r.sweep_value, r.mean_ee_bit_per_j))
        .collect();

    outcome(
        strictly_decreasing(&pc) && m128 > m32,
        format!(
            "P_c 1/4/7/10 dBm: {}; total 7 dBm: M=128 {m128:.4e} vs M=32 {m32:.4e}; per-antenna scaling (info) {}",
            fmt(&pc),
            pa.join(", ")
        ),
    )
}

fn admission_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let sys = SystemConfig {
        num_users: 4,
        ..table_one()
    };
    let (mut equal, mut worse) = (0, 0);
    for _ in 0..500 {
        let rates: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..5.0)).collect();
        let qos = QosSpec::new(rates, QosSpec::default_qos_snr(sys.link_params().unwrap().noise_power_w)).unwrap();
        let ch = build_channel(&sys.geometry, sys.num_antennas, 4, rng.random()).unwrap();
        let need = check_feasibility(&ch, &qos, 0.0).unwrap().required_total_w;
        let budget = need * rng.random_range(0.05..1.0);
        let greedy = admit_users(&ch, &qos, budget).unwrap().admitted_count;
        let best = exhaustive_admission(&ch, &qos, budget).unwrap();
        if greedy > best {
            worse += 1;
        }
        if greedy == best {
            equal += 1;
        }
    }
    let exhaustive_ok = worse == 0 && equal >= 450;

    let crowded = SystemConfig {
        num_users: 9,
        max_power_w: 0.1,
        min_spectral_eff: MinRate::Uniform(3.0),
        ..table_one()
    };
    let admitted = |rows: Vec<mimo_ee::experiment::SweepRow>| rows.iter().map(|r| r.mean_admitted).collect::<Vec<_>>();
    let by_rate = admitted(sweep(crowded.clone(), SweepVariable::MinRate, &[2.0, 3.0, 4.0, 5.0], 200));
    let by_budget = admitted(sweep(crowded.clone(), SweepVariable::MaxPowerW, &[0.01, 0.1, 1.0, 10.0], 200));
    let by_users = admitted(sweep(
        crowded,
        SweepVariable::NumRequestingUsers,
        &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        200,
    ));
    let nonincreasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let nondecreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let short = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(",");
    outcome(
        exhaustive_ok && nonincreasing(&by_rate) && nondecreasing(&by_budget) && nondecreasing(&by_users),
        format!(
            "K=4: {equal}/500 equal to exhaustive, {worse} above; admitted vs rate [{}], vs budget [{}], vs users [{}]",
            short(&by_rate),
            short(&by_budget),
            short(&by_users)
        ),
    )
}

fn channel_statistics() -> Outcome {
    let (m, k, draws) = (128usize, 3usize, 10_000u64);
    let geom = GeometryConfig::default();
    let distances = sample_geometry(&geom, k, 5).unwrap();
    let beta = large_scale_gain(&distances, &geom, 6).unwrap();
    let params = LinkParams::new(120e3, mimo_ee::units::dbm_to_w(-170.0), 5e-3 / m as f64, m, 1e-3).unwrap();
    let alloc = PowerAllocation::equal_split(k, 1.0).unwrap();

    let (mut norm, mut cross) = (0.0, 0.0);
    let mut signal = vec![0.0; k];
    let mut interference = vec![0.0; k];
    let mut per_draw = vec![0.0; k];
    for d in 0..draws {
        let h = sample_small_scale(m, k, 1_000_000 + d).unwrap();
        norm += h.column_norm_sqr(0);
        cross += h.column_inner(0, 1).norm_sqr() / h.column_norm_sqr(1);
        let ch = ChannelState::from_parts(h, beta.clone(), distances.clone()).unwrap();
        for u in 0..k {
            let s = alloc.powers_w[u] * beta[u] * ch.small_scale_norm_sqr(u);
            let sinr = exact_sinr(&alloc, &ch, &params, u).unwrap();
            signal[u] += s;
            interference[u] += s / sinr - params.noise_power_w;
            per_draw[u] += sinr;
        }
    }
    let n = draws as f64;
    let norm_gap = (norm / n - m as f64).abs() / m as f64;
    let cross_gap = (cross / n - 1.0).abs();
    let ch = build_channel(&geom, m, k, 0).unwrap();
    let ch = ChannelState::from_parts(ch.small_scale, beta.clone(), distances).unwrap();
    let mut sinr_gap = 0.0f64;
    let mut naive_gap = 0.0f64;
    for u in 0..k {
        let asym = asymptotic_sinr(&alloc, &ch, &params, u).unwrap();
        let ratio_of_means = (signal[u] / n) / (interference[u] / n + params.noise_power_w);
        sinr_gap = sinr_gap.max((ratio_of_means - asym).abs() / asym);
        naive_gap = naive_gap.max((per_draw[u] / n - asym).abs() / asym);
    }
    outcome(
        norm_gap < 0.02 && cross_gap < 0.05 && sinr_gap < 0.05,
        format!(
            "E|h|^2 gap {norm_gap:.2e}, cross-term gap {cross_gap:.2e}, SINR ratio-of-means gap {sinr_gap:.2e} \
             (per-draw mean gap {naive_gap:.2e}, info)"
        ),
    )
}

fn baseline_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let (mut tested, mut lost) = (0, 0);
    let mut worst = f64::INFINITY;
    while tested < 500 {
        let sys = SystemConfig {
            num_users: rng.random_range(1..=4),
            min_spectral_eff: MinRate::Uniform(0.3),
            max_power_w: 10f64.powf(rng.random_range(-2.0..0.7)),
            ..table_one()
        };
        let (ch, qos, params) = instance(&sys, rng.random());
        let equal = PowerAllocation::equal_split(sys.num_users, sys.max_power_w).unwrap();
        if max_qos_violation(&equal.powers_w, &ch, &qos, &decode_order(&ch)).unwrap() > 0.0 {
            continue;
        }
        tested += 1;
        let base = lower_bound_energy_efficiency(&equal, &ch, &params).unwrap();
        let r = solve_ee(&ch, &qos, &params, sys.max_power_w, &sys.solver).unwrap();
        worst = worst.min(r.achieved_ee / base);
        if r.achieved_ee < base {
            lost += 1;
        }
    }
    outcome(
        lost == 0,
        format!("{tested} instances with QoS-feasible equal split, {lost} losses, smallest ratio {worst:.3e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 oracle equivalence", oracle_equivalence),
        ("2 bisection root residual", dinkelbach_root),
        ("3 constraint satisfaction", constraint_satisfaction),
        ("4 efficiency vs radiated power", transmit_power_trend),
        ("5 circuit power and antenna trends", circuit_and_antenna_trends),
        ("6 admission properties", admission_properties),
        ("7 channel statistics", channel_statistics),
        ("8 baseline dominance", baseline_dominance),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        println!(
            "[{}] criterion {name}: {} ({:.1} s)",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
