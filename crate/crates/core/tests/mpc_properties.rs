mod common;

use common::reference;
use stepmpc::constraints::{
    build_cost_profile, is_feasible, BurdenConstraints, Schedule, TimeRamp,
};
use stepmpc::model::NoiseModel;
use stepmpc::mpc::{mpc_step, run_window, MpcConfig, MpcState, PlantSource, SolverKind};

fn config(seed: u64) -> MpcConfig {
    let window = 40;
    let hourly = [
        420.0, 510.0, 560.0, 640.0, 600.0, 520.0, 540.0, 610.0, 680.0, 590.0,
    ];
    let costs = build_cost_profile(&hourly, window, 4, TimeRamp::default()).unwrap();
    let beta = BurdenConstraints::default_beta(6, &costs);
    let cons = BurdenConstraints::new(6, beta, 2, window).unwrap();
    let mut c = MpcConfig::new(reference(), cons, costs, 6016.0);
    c.seed = seed;
    c
}

fn plant(c: &MpcConfig, seed: u64) -> PlantSource {
    PlantSource::new(c.model.clone(), 0, c.initial_history.clone(), seed)
}

#[test]
fn every_prefix_is_feasible_and_the_horizon_shrinks() {
    for seed in 0..5 {
        let c = config(seed);
        let log = run_window(&c, &mut plant(&c, 100 + seed), false).unwrap();
        assert_eq!(log.len(), 40);
        let choices: Vec<usize> = log.records.iter().map(|r| r.message_type).collect();
        for k in 0..=40 {
            let mut padded = choices[..k].to_vec();
            padded.resize(40, 0);
            let full = Schedule::from_choices(3, &padded).unwrap();
            let none = Schedule::empty(0, 3);
            assert!(
                is_feasible(&full, &none, &c.cons, &c.costs)
                    .unwrap()
                    .is_empty(),
                "seed {seed} prefix {k}"
            );
        }
        for (k, r) in log.records.iter().enumerate() {
            assert_eq!(r.planned.len(), 40 - k);
            assert_eq!(r.planned[0], r.message_type);
            assert_eq!(r.prob_estimate, r.satisfied as f64 / 100.0);
            assert!((0.0..=1.0).contains(&r.prob_estimate));
            assert!(r.zero_plan_prob <= r.prob_estimate);
        }
        assert_eq!(
            log.totals.messages_sent,
            choices.iter().filter(|&&c| c > 0).count()
        );
        assert!(log.totals.messages_sent <= 6);
    }
}

#[test]
fn replay_is_identical_and_seeds_matter() {
    let c = config(3);
    let a = run_window(&c, &mut plant(&c, 9), true).unwrap();
    let b = run_window(&c, &mut plant(&c, 9), true).unwrap();
    assert_eq!(a, b);
    let other = config(4);
    let d = run_window(&other, &mut plant(&other, 9), false).unwrap();
    let probs = |l: &stepmpc::mpc::RunLog| -> Vec<f64> {
        l.records.iter().map(|r| r.prob_estimate).collect()
    };
    assert_ne!(probs(&a), probs(&d));
}

#[test]
fn stepping_by_hand_matches_run_window() {
    let c = config(11);
    let log = run_window(&c, &mut plant(&c, 5), false).unwrap();
    let mut state = MpcState::new(&c);
    let mut measurement = None;
    for r in &log.records {
        let (out, next) = mpc_step(&c, &state, measurement).unwrap();
        assert_eq!(out.decision, r.message_type);
        assert_eq!(out.probability, r.prob_estimate);
        assert_eq!(out.solution.choices, r.planned);
        state = next;
        measurement = Some(r.measured_steps);
    }
    assert!(mpc_step(&c, &state, measurement).is_err());
}

#[test]
fn branch_and_bound_controller_matches_fast_path() {
    let mut c = config(2);
    let fast = run_window(&c, &mut plant(&c, 2), false).unwrap();
    c.solver = SolverKind::BranchAndBound;
    let bb = run_window(&c, &mut plant(&c, 2), false).unwrap();
    let decisions = |l: &stepmpc::mpc::RunLog| -> Vec<(usize, f64)> {
        l.records
            .iter()
            .map(|r| (r.message_type, r.prob_estimate))
            .collect()
    };
    assert_eq!(decisions(&fast), decisions(&bb));
}

#[test]
fn certain_success_sends_nothing() {
    let mut c = config(1);
    c.model.noise = NoiseModel::constant(0.0, 0.0);
    c.goal = 100.0;
    let log = run_window(&c, &mut |_: usize, _: usize| 150.0, false).unwrap();
    assert!(log
        .records
        .iter()
        .all(|r| r.prob_estimate == 1.0 && r.message_type == 0));
}

#[test]
fn hopeless_goal_sends_nothing() {
    let mut c = config(1);
    c.goal = 1.0e7;
    let log = run_window(&c, &mut |_: usize, _: usize| 150.0, false).unwrap();
    assert!(log
        .records
        .iter()
        .all(|r| r.prob_estimate == 0.0 && r.message_type == 0));
}

#[test]
fn saturated_steps_stay_quiet() {
    // Once the estimate is 1.0 and the zero plan also gives 1.0, nothing is sent.
    for seed in 0..10 {
        let mut c = config(seed);
        c.goal = 4000.0;
        let log = run_window(&c, &mut |_: usize, _: usize| 400.0, false).unwrap();
        for r in &log.records {
            if r.prob_estimate == 1.0 && r.zero_plan_prob == 1.0 {
                assert_eq!(r.message_type, 0, "seed {seed} step {}", r.step);
                assert!(r.planned.iter().all(|&u| u == 0));
            }
        }
    }
}

#[test]
fn exhausted_count_forces_silence() {
    let mut c = config(1);
    c.cons = BurdenConstraints::new(0, c.cons.beta, 2, 40).unwrap();
    let log = run_window(&c, &mut plant(&c, 1), false).unwrap();
    assert_eq!(log.totals.messages_sent, 0);
}

#[test]
fn zero_length_window_gives_empty_log() {
    let mut c = config(1);
    c.cons = BurdenConstraints::new(0, 0.0, 2, 0).unwrap();
    c.costs = stepmpc::constraints::CostProfile::free(0);
    let log = run_window(&c, &mut plant(&c, 1), false).unwrap();
    assert!(log.is_empty());
    assert_eq!(log.totals.messages_sent, 0);
}
