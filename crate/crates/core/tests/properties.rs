//! Randomized invariants across the public API.

mod common;

use mpm_transient::engine::check_plan_bounds;
use mpm_transient::model::{exclusive_switch, gene_expression, GeneExpressionRates};
use mpm_transient::{
    choose_step, dtmc_step, right_truncation, run, step_parameter, weights, FindMaxMethod, ModelSpec,
    RunOptions, SparseDistribution, StateVec, StepPlan, UniformizationRate,
};
use proptest::prelude::*;

fn gene() -> ModelSpec {
    gene_expression(GeneExpressionRates::default())
}

fn switch_state() -> impl Strategy<Value = Vec<u32>> {
    (0u32..60, 0u32..60, 0u32..3).prop_map(|(a, b, promoter)| {
        let mut x = vec![a, b, 0, 0, 0];
        x[2 + promoter as usize] = 1;
        x
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enabled_classes_keep_states_non_negative(x in switch_state(), t in 0.0f64..3600.0) {
        let spec = exclusive_switch();
        let enabled = spec.enabled_classes(&x);
        let mut exit = 0.0;
        for (j, c) in spec.classes().iter().enumerate() {
            let rate = spec.rate(j, &x, t).unwrap();
            prop_assert!(rate >= 0.0);
            if enabled.contains(&j) {
                prop_assert!(StateVec::new(x.clone()).apply(&c.change).is_some());
                exit += rate;
            } else {
                prop_assert_eq!(rate, 0.0);
            }
        }
        prop_assert!((spec.exit_rate(&x, t) - exit).abs() <= 1e-12 * exit.max(1.0));
    }

    #[test]
    fn state_factors_are_monotone(x in switch_state(), k in 0usize..2) {
        let spec = exclusive_switch();
        let mut y = x.clone();
        y[k] += 1;
        for c in spec.classes() {
            prop_assert!(c.state_factor.value(&y) >= c.state_factor.value(&x));
        }
    }

    #[test]
    fn truncation_is_minimal_and_monotone(mu in 0.0f64..2000.0, k in 2i32..13) {
        let eps = 10f64.powi(-k);
        let r = right_truncation(mu, eps);
        let w = weights(mu, r);
        let captured: f64 = w.iter().sum();
        prop_assert!(captured >= 1.0 - eps - 1e-13);
        prop_assert!(captured <= 1.0 + 1e-12);
        prop_assert!(w.iter().all(|&p| (0.0..=1.0).contains(&p)));
        if r > 0 {
            let below: f64 = w[..r].iter().sum();
            prop_assert!(below < 1.0 - eps + 1e-13);
        }
        prop_assert!(right_truncation(mu * 1.1, eps) >= r);
        prop_assert!(right_truncation(mu, eps * 10.0) <= r);
    }

    #[test]
    fn step_parameter_grows_with_delta(a in 0.1f64..50.0, b in -0.001f64..0.01, t in 0.0f64..100.0, d in 0.0f64..10.0) {
        let lambda = UniformizationRate::from_coefficients(StateVec::new(vec![1]), a, b);
        let mu = step_parameter(&lambda, t, d).unwrap();
        let mu2 = step_parameter(&lambda, t, d * 1.5 + 0.1).unwrap();
        prop_assert!(mu >= 0.0 && mu2 >= mu);
    }

    #[test]
    fn bounds_never_exceed_jump_probabilities(x in switch_state(), t in 0.0f64..3500.0, d in 0.001f64..100.0) {
        let spec = exclusive_switch();
        let x_max = StateVec::new(vec![x[0] + 3, x[1] + 3, 1, 1, 1]);
        let plan = StepPlan::new(&spec, x_max, t, d.min(3600.0 - t), 1e-10, 5).unwrap();
        check_plan_bounds(&plan, &spec, &[StateVec::new(x)], 17).unwrap();
    }

    #[test]
    fn one_step_conserves_or_loses_mass(
        states in proptest::collection::vec((0u32..20, 0u32..40, 1u32..100), 1..12),
        t in 0.0f64..3000.0,
        d in 0.01f64..500.0,
        threshold in prop_oneof![Just(0.0), Just(1e-6)],
    ) {
        let spec = gene();
        let total: u32 = states.iter().map(|s| s.2).sum();
        let mut v = SparseDistribution::new();
        for &(a, b, w) in &states {
            v.add(StateVec::new(vec![a, b]), w as f64 / total as f64);
        }
        let plan = StepPlan::new(&spec, StateVec::new(vec![21, 41]), t, d, 1e-10, 5).unwrap();
        let step = dtmc_step(&v, &plan, &spec, threshold).unwrap();
        let out = step.next.total_mass();
        prop_assert!(step.next.iter().all(|(_, p)| p > 0.0 && p >= threshold));
        prop_assert!((out + step.prune_loss + step.step_defect - v.total_mass()).abs() < 1e-13);
        prop_assert!(step.step_defect >= 0.0 && step.prune_loss >= 0.0);
    }

    #[test]
    fn plans_respect_the_jump_budget(r_star in 1usize..30, a in 0u32..30, b in 0u32..30, t in 0.0f64..3500.0) {
        let spec = exclusive_switch();
        let support: SparseDistribution = [(StateVec::new(vec![a, b, 1, 0, 0]), 1.0)].into_iter().collect();
        let plan = choose_step(r_star, t, 3600.0, 1e-10, &support, &spec, FindMaxMethod::Monotone, 4.0).unwrap();
        prop_assert!(plan.truncation.right_point <= r_star);
        prop_assert!(plan.delta > 0.0 && plan.t_start + plan.delta <= 3600.0 + 1e-9);
        let lambda = UniformizationRate::new(&spec, plan.x_max().clone());
        let mu = step_parameter(&lambda, t, plan.delta).unwrap();
        prop_assert!((mu - plan.mu()).abs() <= 1e-12 * mu.max(1.0));
        prop_assert_eq!(right_truncation(mu, 1e-10), plan.truncation.right_point);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ledger_accounts_for_all_lost_mass(
        horizon in 5.0f64..60.0,
        r_star in 3usize..12,
        threshold in prop_oneof![Just(1e-20), Just(1e-15), Just(1e-8)],
        checkpoint in 0.0f64..1.0,
    ) {
        let spec = gene().with_horizon(horizon).unwrap();
        let cp = (checkpoint * horizon * 1e3).round() / 1e3;
        let res = run(&spec, &RunOptions {
            r_star,
            delta_threshold: threshold,
            checkpoints: vec![cp],
            ..RunOptions::default()
        }).unwrap();
        let last = res.final_distribution();
        prop_assert!(((1.0 - last.total_mass()) - res.ledger.total()).abs() < 1e-12);
        let times: Vec<f64> = res.checkpoints.iter().map(|c| c.0).collect();
        prop_assert!(times.contains(&cp) && *times.last().unwrap() == horizon);
        for r in &res.ledger.steps {
            prop_assert!(r.r <= r_star);
            prop_assert!(r.bounding_loss >= 0.0 && r.poisson_loss >= 0.0 && r.prune_loss >= 0.0);
        }
    }
}

#[test]
fn homogeneous_runs_match_dense_uniformization() {
    // flip-flop with two independent two-state switches
    let spec = mpm_transient::parse_model(
        r#"{"species":["a","b"],"horizon":3,
            "initial":[{"state":[0,0],"prob":0.6},{"state":[1,1],"prob":0.4}],
            "classes":[
              {"name":"a_on","guard":[{"var":"a","max":0}],"change":[1,0],
               "rate":{"constant":1.3,"exponents":[0,0],"time":{"kind":"constant","a":1}}},
              {"name":"a_off","guard":[{"var":"a","min":1}],"change":[-1,0],
               "rate":{"constant":0.4,"exponents":[1,0],"time":{"kind":"constant","a":1}}},
              {"name":"b_on","guard":[{"var":"b","max":1}],"change":[0,1],
               "rate":{"constant":0.9,"exponents":[0,0],"time":{"kind":"constant","a":1}}},
              {"name":"b_off","guard":[{"var":"b","min":1}],"change":[0,-1],
               "rate":{"constant":0.5,"exponents":[0,1],"time":{"kind":"constant","a":1}}}]}"#,
    )
    .unwrap();
    let states: Vec<[u32; 2]> = (0..2).flat_map(|a| (0..3).map(move |b| [a, b])).collect();
    let idx = |x: &[u32]| states.iter().position(|s| s == x).unwrap();
    let mut q = vec![vec![0.0; states.len()]; states.len()];
    for (i, s) in states.iter().enumerate() {
        for (j, c) in spec.classes().iter().enumerate() {
            if !spec.enabled_classes(s).contains(&j) {
                continue;
            }
            let y = StateVec::new(s.to_vec()).apply(&c.change).unwrap();
            let r = spec.rate(j, s, 0.0).unwrap();
            q[i][idx(&y)] += r;
            q[i][i] -= r;
        }
    }
    let mut p0 = vec![0.0; states.len()];
    p0[idx(&[0, 0])] = 0.6;
    p0[idx(&[1, 1])] = 0.4;
    let reference = common::dense_uniformization(&q, &p0, 3.0);
    for r_star in [4, 9, 40] {
        let res = run(&spec, &RunOptions { r_star, delta_threshold: 0.0, ..RunOptions::default() }).unwrap();
        let p = res.final_distribution();
        for (i, s) in states.iter().enumerate() {
            assert!(p.get(s) <= reference[i] + 1e-12, "R*={r_star} {s:?}");
        }
        let tv: f64 = states.iter().enumerate().map(|(i, s)| (p.get(s) - reference[i]).abs()).sum();
        let windows = res.ledger.steps.len() as f64;
        assert!(tv <= windows * 1e-10 + 1e-12, "R*={r_star}: {tv:e} over {windows} windows");
        assert!(res.ledger.bounding_loss < 1e-13);
    }
}
