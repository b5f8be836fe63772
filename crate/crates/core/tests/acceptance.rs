//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use departing_bandits::environment::{run_stream, Simulator};
use departing_bandits::experiment::{self, ExperimentConfig, PolicySetKind};
use departing_bandits::instances::{
    build_semi_synthetic, load_ratings, random_instance, RandomInstanceConfig, RatingsConfig,
    SemiSyntheticConfig,
};
use departing_bandits::learning::{self, UcbHybrid};
use departing_bandits::planning::{self, Belief};
use departing_bandits::structure::{self, Structure};
use departing_bandits::{dp, oracle, Instance, Policy, RngStream};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_policy(rng: &mut RngStream, max_prefix: usize) -> Policy {
    let len = rng.gen_range(0..=max_prefix);
    let prefix = (0..len).map(|_| rng.gen_range(0..2)).collect();
    Policy::new(prefix, rng.gen_range(0..2))
}

fn criterion_1() -> Outcome {
    let inst = Instance::table1();
    let plan = planning::optimal_policy_2x2(&inst).unwrap();
    let b = Belief::new(inst.prior()[0]).unwrap();
    let v1 = planning::fixed_arm_value_2x2(&inst, 0, b).unwrap();
    let v2 = planning::fixed_arm_value_2x2(&inst, 1, b).unwrap();
    let gap1 = plan.value - v1;
    let gap2 = plan.value - v2;

    let (grid_policy, grid_best) = oracle::grid_search_threshold(&inst, 60).unwrap();
    let o1 = oracle::threshold_value_by_survival(&inst, 1, 0).unwrap();
    let o2 = oracle::threshold_value_by_survival(&inst, 0, 0).unwrap();

    let pass = plan.structure.variant == Structure::DominantColumn
        && plan.policy == Policy::threshold(1, 6).unwrap()
        && grid_policy == plan.policy
        && gap1 > 0.0169
        && gap2 > 1.22e-5
        && (gap1 - (grid_best - o1)).abs() <= 1e-10
        && (gap2 - (grid_best - o2)).abs() <= 1e-10;
    outcome(
        pass,
        format!(
            "{} {} value={:.13} gap_pi1={:.7} gap_pi2={:.4e} oracle_gaps=({:.7}, {:.4e})",
            plan.structure.variant,
            plan.policy,
            plan.value,
            gap1,
            gap2,
            grid_best - o1,
            grid_best - o2
        ),
    )
}

fn criterion_2() -> Outcome {
    let inst = Instance::table1();
    let v1 = oracle::brute_force_value(&inst, &Policy::fixed(0), 1).unwrap();
    let v2 = oracle::brute_force_value(&inst, &Policy::fixed(1), 1).unwrap();
    let pass = (v1 - 0.368).abs() <= 1e-15 && (v2 - 0.394).abs() <= 1e-15;
    outcome(pass, format!("H=1 pi1={v1} pi2={v2}"))
}

fn criterion_3() -> Outcome {
    let mut rng = RngStream::new(3, 0);
    let config = RandomInstanceConfig::new(2, 2, 0.05);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let inst = random_instance(&config, &mut rng).unwrap();
        let policy = random_policy(&mut rng, 20);
        let b = Belief::new(inst.prior()[0]).unwrap();
        let closed = planning::expected_return_truncated(&inst, &policy, b, 40)
            .unwrap()
            .value;
        let brute = oracle::brute_force_value(&inst, &policy, 40).unwrap();
        worst = worst.max((closed - brute).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("100 instances, H=40, max |diff|={worst:.3e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = RngStream::new(4, 0);
    let config = RandomInstanceConfig::new(2, 2, 0.1).with_random_departure();
    let mut inside = 0;
    let mut worst_z = 0.0f64;
    for i in 0..10 {
        let inst = random_instance(&config, &mut rng).unwrap();
        let policy = random_policy(&mut rng, 10);
        let exact = planning::policy_value(&inst, &policy).unwrap();
        let mc =
            oracle::monte_carlo_value(&Simulator::new(inst), &policy, 100_000, 400 + i).unwrap();
        let z = (mc.mean - exact).abs() / mc.stderr;
        worst_z = worst_z.max(z);
        if z <= 3.0 {
            inside += 1;
        }
    }
    let share = inside as f64 / 10.0;
    outcome(
        share >= 0.95,
        format!("{inside}/10 within 3 SE, max z={worst_z:.2}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = RngStream::new(5, 0);
    let config = RandomInstanceConfig::new(3, 1, 0.1).with_random_departure();
    let mut inside = 0;
    let mut worst_z = 0.0f64;
    for i in 0..20 {
        let inst = random_instance(&config, &mut rng).unwrap();
        let a = rng.gen_range(0..3);
        let (p, l) = (inst.click(a, 0), inst.depart(a, 0));
        let formula = p / (l * (1.0 - p));
        let mc =
            oracle::monte_carlo_value(&Simulator::new(inst), &Policy::fixed(a), 100_000, 500 + i)
                .unwrap();
        let z = (mc.mean - formula).abs() / mc.stderr;
        worst_z = worst_z.max(z);
        if z <= 3.0 {
            inside += 1;
        }
    }
    outcome(
        inside == 20,
        format!("{inside}/20 within 3 SE, max z={worst_z:.2}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = RngStream::new(6, 0);
    let config = RandomInstanceConfig::new(2, 1, 0.1).with_random_departure();
    let mut worst = 0.0f64;
    for i in 0..5 {
        let inst = random_instance(&config, &mut rng).unwrap();
        let (p, l) = (inst.click(0, 0), inst.depart(0, 0));
        let lengths =
            oracle::sample_lengths(&Simulator::new(inst), &Policy::fixed(0), 100_000, 600 + i)
                .unwrap();
        worst = worst.max(oracle::geometric_ks_distance(&lengths, l * (1.0 - p)));
    }
    outcome(
        worst < 0.01,
        format!("5 instances x 1e5 lengths, max KS distance={worst:.5}"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = RngStream::new(7, 0);
    let config = RandomInstanceConfig::new(2, 2, 0.05);
    let mut worst_exhaustive = 0.0f64;
    for _ in 0..50 {
        let inst = random_instance(&config, &mut rng).unwrap();
        for h in 1..=14 {
            let plan = dp::dp_plan(&inst, h).unwrap();
            let (_, best) = oracle::exhaustive_best_schedule(&inst, h).unwrap();
            worst_exhaustive = worst_exhaustive.max((plan.value - best).abs());
        }
    }
    let dc = RandomInstanceConfig::new(2, 2, 0.05).with_target(Structure::DominantColumn);
    let mut bound_ok = true;
    let mut worst_gap = 0.0f64;
    for _ in 0..50 {
        let inst = random_instance(&dc, &mut rng).unwrap();
        let exact = planning::optimal_policy_2x2(&inst).unwrap().value;
        let plan = dp::dp_plan(&inst, 60).unwrap();
        let eps = inst.epsilon();
        let gap = exact - plan.value;
        worst_gap = worst_gap.max(gap);
        bound_ok &= gap >= -1e-12 && gap <= (1.0 - eps).powi(60) / eps;
    }
    outcome(
        worst_exhaustive <= 1e-12 && bound_ok,
        format!("H<=14 max |dp - exhaustive|={worst_exhaustive:.3e}; H=60 on 50 DC instances max gap={worst_gap:.3e}, within bound: {bound_ok}"),
    )
}

fn criterion_8() -> Outcome {
    let inst = Instance::table1();
    let run = |kind| {
        let config = ExperimentConfig::new(100_000, 20, kind);
        experiment::run_experiment(&inst, &config).unwrap()
    };
    let fixed = run(PolicySetKind::Fixed);
    let full = run(PolicySetKind::Threshold);
    let rf = fixed.pseudo_doubling_ratio().unwrap();
    let rt = full.pseudo_doubling_ratio().unwrap();
    let pass = (1.9..=2.1).contains(&rf) && rt < 1.8;
    outcome(
        pass,
        format!(
            "T=1e5, 20 seeds: fixed-arm ratio={rf:.4} (realized {:.4}), Pi_H ratio={rt:.4} (realized {:.4}, |Pi_H|={}, optimal share late={:.3}, confidence radius at n=T/|Pi_H|: {:.2})",
            fixed.doubling_ratio().unwrap(),
            full.doubling_ratio().unwrap(),
            full.policies.len(),
            full.late_best_share(),
            UcbHybrid::new(full.policies.clone(), 100_000, full.params)
                .unwrap()
                .radius(100_000 / full.policies.len() as u64),
        ),
    )
}

fn criterion_9() -> Outcome {
    let inst =
        Instance::with_unit_departure(vec![1.0], vec![vec![0.2], vec![0.4], vec![0.6]], None)
            .unwrap();
    let (best, _) = planning::single_type_optimal_arm(&inst).unwrap();
    let values: Vec<f64> = (0..3)
        .map(|a| planning::fixed_arm_single_type_value(inst.click(a, 0), 1.0))
        .collect();
    assert!(values.windows(2).all(|w| w[1] - w[0] >= 0.2));
    let params = learning::subexp_params_single_type(inst.epsilon()).unwrap();
    let sim = Simulator::new(inst);
    let t = 10_000;
    let mut hits = 0;
    for seed in 0..40 {
        let mut ucb = UcbHybrid::new(learning::build_fixed_arm_policy_set(3), t, params).unwrap();
        let trace = run_stream(&sim, &mut ucb, t, seed).unwrap();
        let mut late = [0u32; 3];
        for e in &trace.episodes[t - t / 10..] {
            late[e.policy_id] += 1;
        }
        let top = (0..3)
            .max_by_key(|&a| (late[a], std::cmp::Reverse(a)))
            .unwrap();
        if top == best {
            hits += 1;
        }
    }
    let share = hits as f64 / 40.0;
    outcome(
        share >= 0.95,
        format!("values={values:.3?}, best arm most pulled late in {hits}/40 seeds"),
    )
}

fn criterion_10() -> Outcome {
    let mut pass = true;
    for h in 0..=50 {
        let set = learning::build_threshold_policy_set(h);
        let unique: std::collections::HashSet<&Policy> = set.iter().collect();
        pass &= set.len() == 2 * h + 2
            && unique.len() == set.len()
            && set.contains(&Policy::threshold(1, 0).unwrap())
            && set.contains(&Policy::threshold(0, 0).unwrap());
    }
    outcome(pass, "H = 0..=50".to_string())
}

fn criterion_11() -> Outcome {
    let mut rng = RngStream::new(11, 0);
    let config = RandomInstanceConfig::new(2, 2, 0.05).with_target(Structure::DominantDiagonal);
    let mut switched = 0;
    for _ in 0..1_000 {
        let inst = random_instance(&config, &mut rng).unwrap();
        debug_assert_eq!(
            structure::classify(&inst).unwrap(),
            Structure::DominantDiagonal
        );
        let (policy, _) = oracle::grid_search_threshold(&inst, 60).unwrap();
        if !policy.prefix().is_empty() {
            switched += 1;
        }
    }
    outcome(
        switched == 0,
        format!("{switched}/1000 DD instances chose h > 0"),
    )
}

fn criterion_12() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ratings");
    let categories = vec!["Comedy".to_string(), "Horror".to_string()];
    let table = load_ratings(
        dir.join("ratings.csv"),
        dir.join("movies.csv"),
        &categories,
        &RatingsConfig::default(),
    )
    .unwrap();
    let config = SemiSyntheticConfig {
        epsilon: 0.2,
        ..SemiSyntheticConfig::default()
    };
    let inst = build_semi_synthetic(&table, 2, &config, &mut RngStream::new(12, 0))
        .unwrap()
        .instance;
    // 20 users rate comedies 1.0 and horror 5.0; 30 rate comedies 5.0/4.5
    // and horror 1.0/1.5.
    let expected_p = [[0.8, 0.05], [0.01, 0.75]];
    let expected_q = [0.4, 0.6];
    let mut worst_p = 0.0f64;
    let mut worst_q = 0.0f64;
    for x in 0..2 {
        worst_q = worst_q.max((inst.prior()[x] - expected_q[x]).abs());
        for (a, row) in expected_p.iter().enumerate() {
            worst_p = worst_p.max((inst.click(a, x) - row[x]).abs());
        }
    }
    outcome(
        worst_p <= 0.05 && worst_q <= 0.05,
        format!("max |P - expected|={worst_p:.3e}, max |q - expected|={worst_q:.3e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2}: {status} ({:.2}s) {}",
            start.elapsed().as_secs_f64(),
            result.detail
        );
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
