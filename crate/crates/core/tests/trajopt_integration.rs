//! Rollout and optimizer behavior against the real simulator.

use pushplan::costs::CostParams;
use pushplan::planner::get_action_sequences;
use pushplan::planner::PlannerParams;
use pushplan::rng;
use pushplan::scenes::preset_scene;
use pushplan::trajopt::{
    optimize, trajectory_rollout, ControlSequence, OptParams, PlanSetup, UpdateRule,
};
use pushplan::world::Control;

fn setup_for<'a>(
    world: &'a pushplan::world::World,
    scene: &pushplan::scenes::SceneSpec,
    costs: &'a CostParams,
) -> PlanSetup<'a> {
    PlanSetup {
        world,
        task: scene.task(),
        costs,
        t_rest: 2.0,
    }
}

#[test]
fn rollout_static_scene_at_goal_costs_one_action() {
    let mut scene = preset_scene("wide").unwrap();
    // Object already inside the goal region; robot far away.
    scene.objects[0].x = 0.5;
    scene.objects[0].y = 0.0;
    let world = scene.world();
    let costs = CostParams::default();
    let setup = setup_for(&world, &scene, &costs);
    let seq = ControlSequence(vec![Control::zero(1.0)]);
    let r = trajectory_rollout(&setup, &scene.initial_state(), &seq).unwrap();
    assert_eq!(r.costs, vec![1.0]);
    assert_eq!(r.suffix_values, vec![1.0]);
    assert_eq!(r.states.len(), 2);
}

#[test]
fn rollout_zero_velocity_controls_cost_only_the_action_constant() {
    let scene = preset_scene("wide").unwrap();
    let world = scene.world();
    let costs = CostParams::default();
    let setup = setup_for(&world, &scene, &costs);
    let seq = ControlSequence(vec![Control::zero(1.0); 4]);
    let r = trajectory_rollout(&setup, &scene.initial_state(), &seq).unwrap();
    for t in 0..3 {
        assert_eq!(r.costs[t], 1.0, "C[{t}] should be k_act only");
    }
    // Final step adds the weighted terminal cost; the object never reached
    // the goal, so it dominates.
    assert!(r.costs[3] > 1.0);
}

#[test]
fn rollout_propagates_stepper_errors() {
    let scene = preset_scene("wide").unwrap();
    let world = scene.world();
    let costs = CostParams::default();
    let setup = setup_for(&world, &scene, &costs);
    let seq = ControlSequence(vec![Control::zero(0.0011)]);
    assert!(trajectory_rollout(&setup, &scene.initial_state(), &seq).is_err());
}

#[test]
fn optimize_returns_input_when_threshold_already_met() {
    let scene = preset_scene("wide").unwrap();
    let world = scene.world();
    let costs = CostParams::default();
    let setup = setup_for(&world, &scene, &costs);
    let params = PlannerParams::default();
    let candidates =
        get_action_sequences(&world, &scene.initial_state(), scene.task(), &params).unwrap();
    // The fastest candidate reaches the goal in one deterministic action, so
    // the initial rollout is already at the auto threshold k_act * 1 + 0.01.
    let fast = candidates[0].clone();
    assert_eq!(fast.len(), 1);
    let out = optimize(
        &setup,
        &scene.initial_state(),
        &fast,
        &OptParams::default(),
        9,
    )
    .unwrap();
    assert_eq!(out.sequence, fast);
    assert_eq!(out.history.len(), 1);
    assert!(out.rollout.total() <= 1.01);
}

#[test]
fn optimize_incumbent_cost_is_monotone_over_seeds() {
    let mut scene = preset_scene("strip").unwrap();
    // Off-center start keeps the edge cost active so iterations run.
    scene.objects[0].y = 0.04;
    let world = scene.world();
    let costs = CostParams::default();
    let setup = setup_for(&world, &scene, &costs);
    let initial = ControlSequence(vec![
        Control {
            vx: 0.12,
            vy: 0.0,
            vrot: 0.0,
            vopen: 0.0,
            duration: 1.0
        };
        4
    ]);
    let params = OptParams {
        rollouts: 4,
        max_iterations: 4,
        ..OptParams::default()
    };
    for seed in 0..20 {
        let out = optimize(&setup, &scene.initial_state(), &initial, &params, seed).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0], "seed {seed}: history {:?}", out.history);
        }
        assert!(out.rollout.total() <= out.history[0]);
    }
}

#[test]
fn optimize_is_bit_deterministic_for_a_seed() {
    let mut scene = preset_scene("strip").unwrap();
    scene.objects[0].y = 0.03;
    let world = scene.world();
    let costs = CostParams::default();
    let setup = setup_for(&world, &scene, &costs);
    let initial = ControlSequence(vec![
        Control {
            vx: 0.1,
            vy: 0.0,
            vrot: 0.0,
            vopen: 0.0,
            duration: 1.0
        };
        3
    ]);
    let params = OptParams {
        rollouts: 6,
        max_iterations: 3,
        ..OptParams::default()
    };
    let a = optimize(&setup, &scene.initial_state(), &initial, &params, 123).unwrap();
    let b = optimize(&setup, &scene.initial_state(), &initial, &params, 123).unwrap();
    assert_eq!(a.sequence, b.sequence);
    assert_eq!(a.history, b.history);
    assert_eq!(a.rollout.costs, b.rollout.costs);
}

#[test]
fn greedy_and_weighted_agree_at_single_rollout() {
    let mut scene = preset_scene("strip").unwrap();
    scene.objects[0].y = 0.03;
    let world = scene.world();
    let costs = CostParams::default();
    let setup = setup_for(&world, &scene, &costs);
    let initial = ControlSequence(vec![
        Control {
            vx: 0.1,
            vy: 0.0,
            vrot: 0.0,
            vopen: 0.0,
            duration: 1.0
        };
        3
    ]);
    let base = OptParams {
        rollouts: 1,
        max_iterations: 3,
        ..OptParams::default()
    };
    let greedy = optimize(&setup, &scene.initial_state(), &initial, &base, 77).unwrap();
    let weighted_params = OptParams {
        update: UpdateRule::Weighted,
        ..base
    };
    let weighted =
        optimize(&setup, &scene.initial_state(), &initial, &weighted_params, 77).unwrap();
    assert_eq!(greedy.sequence, weighted.sequence);
}

#[test]
fn optimized_cost_never_exceeds_initial_on_free_push() {
    let scene = preset_scene("wide").unwrap();
    let world = scene.world();
    let costs = CostParams::default();
    let setup = setup_for(&world, &scene, &costs);
    let initial = ControlSequence(vec![
        Control {
            vx: 0.2,
            vy: 0.0,
            vrot: 0.0,
            vopen: 0.0,
            duration: 1.0
        };
        4
    ]);
    let first = trajectory_rollout(&setup, &scene.initial_state(), &initial).unwrap();
    let out = optimize(
        &setup,
        &scene.initial_state(),
        &initial,
        &OptParams {
            max_iterations: 5,
            ..OptParams::default()
        },
        5,
    )
    .unwrap();
    assert!(out.rollout.total() <= first.total());
}

#[test]
fn rollout_seed_streams_are_stable() {
    // Guard against accidental reseeding changes: the derived stream for a
    // fixed path must not change across runs.
    let a = rng::derive(42, &[rng::salt::ROLLOUT, 1, 2]);
    let b = rng::derive(42, &[rng::salt::ROLLOUT, 1, 2]);
    assert_eq!(a, b);
}
