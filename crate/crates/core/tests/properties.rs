mod common;

use common::{two_by_two, two_category_policy};
use departing_bandits::learning::{self, SubExpParams, UcbHybrid};
use departing_bandits::planning::{self, Belief, SwitchPoint};
use departing_bandits::structure::{self, Structure};
use departing_bandits::{dp, oracle, Policy};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn permutations_are_involutions(inst in two_by_two(), sc in any::<bool>(), st in any::<bool>()) {
        let perm = structure::Permutation { swap_categories: sc, swap_types: st };
        let twice = perm.apply(&perm.apply(&inst).unwrap()).unwrap();
        prop_assert_eq!(twice, inst);
    }

    #[test]
    fn normalization_preserves_policy_values(inst in two_by_two(), policy in two_category_policy(12)) {
        let (norm, class) = structure::normalize_2x2(&inst).unwrap();
        let p = norm.click_matrix();
        prop_assert!(p[0][0] >= p[0][1] && p[0][0] >= p[1][0] && p[0][0] >= p[1][1]);
        prop_assert_eq!(structure::classify_normalized(p), class.variant);
        let original = structure::denormalize_policy(&policy, &class);
        let on_norm = planning::policy_value(&norm, &policy).unwrap();
        let on_orig = planning::policy_value(&inst, &original).unwrap();
        prop_assert!((on_norm - on_orig).abs() < 1e-12, "{} vs {}", on_norm, on_orig);
    }

    #[test]
    fn optimum_is_invariant_under_relabeling(inst in two_by_two(), sc in any::<bool>(), st in any::<bool>()) {
        let perm = structure::Permutation { swap_categories: sc, swap_types: st };
        let a = planning::optimal_policy_2x2(&inst).unwrap().value;
        let b = planning::optimal_policy_2x2(&perm.apply(&inst).unwrap()).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn policy_normal_form_is_unique(prefix in prop::collection::vec(0usize..3, 0..10), tail in 0usize..3, pad in 0usize..5) {
        let mut padded = prefix.clone();
        padded.extend(std::iter::repeat_n(tail, pad));
        let a = Policy::new(prefix, tail);
        let b = Policy::new(padded, tail);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.prefix().last() != Some(&a.tail()));
        prop_assert_eq!(a.schedule(30), b.schedule(30));
    }

    #[test]
    fn equal_normal_forms_give_equal_walks(inst in two_by_two(), policy in two_category_policy(8), pad in 0usize..4) {
        let mut prefix = policy.prefix().to_vec();
        prefix.extend(std::iter::repeat_n(policy.tail(), pad));
        let padded = Policy::new(prefix, policy.tail());
        let b0 = Belief::new(inst.prior()[0]).unwrap();
        let w1 = planning::belief_category_walk(&policy, b0, 20, &inst).unwrap();
        let w2 = planning::belief_category_walk(&padded, b0, 20, &inst).unwrap();
        prop_assert_eq!(w1, w2);
    }

    #[test]
    fn belief_update_is_monotone(inst in two_by_two(), b1 in 0.0f64..=1.0, b2 in 0.0f64..=1.0, a in 0usize..2) {
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let u_lo = planning::belief_update(Belief::new(lo).unwrap(), a, &inst).unwrap().value();
        let u_hi = planning::belief_update(Belief::new(hi).unwrap(), a, &inst).unwrap().value();
        prop_assert!(u_lo <= u_hi + 1e-15);
        let b = Belief::new(0.5 * (lo + hi)).unwrap();
        if inst.click(a, 0) > inst.click(a, 1) && b.value() > 0.0 && b.value() < 1.0 {
            prop_assert!(planning::belief_update(b, a, &inst).unwrap().value() > b.value());
        }
    }

    #[test]
    fn truncated_sum_matches_survival_products(inst in two_by_two(), policy in two_category_policy(20), h in 1usize..=40) {
        let b = Belief::new(inst.prior()[0]).unwrap();
        let closed = planning::expected_return_truncated(&inst, &policy, b, h).unwrap().value;
        let brute = oracle::brute_force_value(&inst, &policy, h).unwrap();
        prop_assert!((closed - brute).abs() < 1e-12, "{} vs {}", closed, brute);
    }

    #[test]
    fn exact_threshold_value_is_bracketed(inst in two_by_two(), first in 0usize..2, n in 0u64..=30) {
        let b = Belief::new(inst.prior()[0]).unwrap();
        let exact = planning::threshold_value_exact(&inst, first, SwitchPoint::After(n), b).unwrap();
        let policy = Policy::threshold(first, n as usize).unwrap();
        let t = planning::expected_return_truncated(&inst, &policy, b, 400).unwrap();
        prop_assert!(t.value <= exact + 1e-9);
        prop_assert!(exact <= t.value + t.tail_bound + 1e-9);
        let survival = oracle::threshold_value_by_survival(&inst, first, n as usize).unwrap();
        prop_assert!((exact - survival).abs() < 1e-9 * exact.max(1.0));
    }

    #[test]
    fn planner_dominates_threshold_grid(inst in two_by_two()) {
        let plan = planning::optimal_policy_2x2(&inst).unwrap();
        let (grid_policy, grid_value) = oracle::grid_search_threshold(&inst, 60).unwrap();
        prop_assert!(grid_value <= plan.value + 1e-10, "{} > {}", grid_value, plan.value);
        if let Some((_, h)) = plan.policy.as_threshold() {
            if h <= 60 {
                prop_assert!((grid_value - plan.value).abs() < 1e-10, "{} vs {}", grid_policy, plan.policy);
            }
        }
    }

    #[test]
    fn dominant_diagonal_never_switches(inst in two_by_two()) {
        if structure::classify(&inst).unwrap() == Structure::DominantDiagonal {
            let (policy, _) = oracle::grid_search_threshold(&inst, 60).unwrap();
            prop_assert!(policy.prefix().is_empty(), "{}", policy);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dp_matches_exhaustive_search(inst in two_by_two(), h in 1usize..=12) {
        let plan = dp::dp_plan(&inst, h).unwrap();
        let (_, best) = oracle::exhaustive_best_schedule(&inst, h).unwrap();
        prop_assert!((plan.value - best).abs() < 1e-12, "{} vs {}", plan.value, best);
        let replay = oracle::brute_force_value(&inst, &Policy::new(plan.actions.clone(), 0), h).unwrap();
        prop_assert!((replay - plan.value).abs() < 1e-12);
        prop_assert_eq!(plan.cells, h * (h + 3) / 2);
    }

    #[test]
    fn dp_brackets_exact_optimum(inst in two_by_two()) {
        let h = 60;
        let plan = dp::dp_plan(&inst, h).unwrap();
        let exact = planning::optimal_policy_2x2(&inst).unwrap().value;
        let eps = inst.epsilon();
        prop_assert!(plan.value <= exact + 1e-10);
        prop_assert!(exact <= plan.value + (1.0 - eps).powi(h as i32) / eps + 1e-10);
    }

    #[test]
    fn dp_value_grows_with_horizon(inst in two_by_two()) {
        let curve = dp::dp_value_curve(&inst, 30).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-15));
    }
}

proptest! {
    #[test]
    fn radius_decreases_in_both_regimes(eps in 0.05f64..0.95, t in 2usize..1_000_000, eta in 0.1f64..4.0) {
        let mut params: SubExpParams = learning::subexp_params_single_type(eps).unwrap();
        params.eta = eta;
        let ucb = UcbHybrid::new(vec![Policy::fixed(0)], t, params).unwrap();
        let switch = ucb.switch_count().ceil() as u64;
        for n in (1..switch.max(2) + 3).chain([switch * 4, switch * 100]) {
            prop_assert!(ucb.radius(n + 1) < ucb.radius(n), "n = {}", n);
        }
    }

    #[test]
    fn threshold_sets_have_2h_plus_2_distinct_members(h in 0usize..200) {
        let set = learning::build_threshold_policy_set(h);
        prop_assert_eq!(set.len(), 2 * h + 2);
        let unique: std::collections::HashSet<String> = set.iter().map(|p| p.to_string()).collect();
        prop_assert_eq!(unique.len(), set.len());
        prop_assert!(set.contains(&Policy::fixed(0)) && set.contains(&Policy::fixed(1)));
    }

    #[test]
    fn horizon_bounds_truncation_loss(t in 2usize..10_000_000, eps in 0.01f64..0.99) {
        let h = learning::horizon_for_t(t, eps).unwrap();
        let loss = (1.0 - eps).powi(h as i32) / eps;
        prop_assert!(loss <= 1.0 / t as f64 * (1.0 + 1e-9));
        if h > 0 {
            let prev = (1.0 - eps).powi(h as i32 - 1) / eps;
            prop_assert!(prev > 1.0 / t as f64 * (1.0 - 1e-9));
        }
    }
}
