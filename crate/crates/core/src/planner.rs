//! Online task-adaptive planner: candidate control sequences of varying
//! speed, per-candidate trajectory optimization, Monte-Carlo first-action
//! evaluation under action-dependent noise, and the MPC / UAMPC baselines.

use crate::costs::{self, CostParams, Task, TaskKind};
use crate::math::Vec2;
use crate::rng::{self, salt};
use crate::scenes::SceneSpec;
use crate::trace::{Decision, TraceWriter};
use crate::trajopt::{self, ControlSequence, OptParams, OptimizeOutcome, PlanSetup};
use crate::world::{Control, NoiseModel, World, WorldError, WorldState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("TAMPC candidate generation needs N >= 2 (the length schedule divides by N - 1), got N = {0}")]
    TooFewCandidates(usize),
    #[error("invalid scene: {0}")]
    Scene(String),
}

/// Planning method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tampc,
    Mpc,
    Uampc,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Tampc => "tampc",
            Method::Mpc => "mpc",
            Method::Uampc => "uampc",
        }
    }
}

/// How the planned suffix value enters the sampled action evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
     /// Add the value-to-go from step 1 (just the planned terminal cost for
    /// one-action sequences); the sampled running cost already covers step 0.
    SuffixFromSecond,
    /// Add the full suffix value including step 0's planned cost.
    PaperLiteral,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Q: stochastic samples per candidate first action.
    pub samples: usize,
    /// N: candidate control sequences per cycle.
    pub candidates: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Control duration per action [s].
    pub control_duration: f64,
    /// Post-action settling time [s].
    pub t_rest: f64,
    /// Episode budget [s] covering modeled planning plus simulated execution.
    pub timeout: f64,
    pub method: Method,
    pub value_mode: ValueMode,
    /// Speed used to initialize the MPC baseline [m/s].
    pub quasi_static_speed: f64,
    /// Modeled planning cost per simulated second of planning physics.
    pub planning_time_rate: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            samples: 8,
            candidates: 4,
            n_min: 1,
            n_max: 20,
            control_duration: 1.0,
            t_rest: 2.0,
            timeout: 180.0,
            method: Method::Tampc,
            value_mode: ValueMode::SuffixFromSecond,
            quasi_static_speed: 0.1,
            planning_time_rate: 1e-3,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.method == Method::Tampc && self.candidates < 2 {
            return Err(PlanError::TooFewCandidates(self.candidates));
        }
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(PlanError::Scene(format!(
                "need 1 <= n_min <= n_max, got {}..{}",
                self.n_min, self.n_max
            )));
        }
        if self.samples < 1 {
            return Err(PlanError::Scene("Q must be >= 1".into()));
        }
        Ok(())
    }

    /// Effective action-count range: UAMPC forces n_min to n_max.
    fn length_range(&self) -> (usize, usize) {
        match self.method {
            Method::Uampc => (self.n_max, self.n_max),
            _ => (self.n_min, self.n_max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    None,
    Timeout,
    ObjectFell,
}

/// Everything recorded about one episode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub failure: FailureReason,
    pub executed_actions: usize,
    /// Modeled planning time [s] (simulated planning seconds x rate).
    pub planning_time: f64,
    /// Simulated execution time [s] (action durations plus settling).
    pub execution_time: f64,
    /// planning_time + execution_time; compared against the timeout.
    pub total_time: f64,
    /// ||u|| of each executed action.
    pub executed_speeds: Vec<f64>,
    /// Per-cycle decision log.
    pub cycles: Vec<Decision>,
}

impl EpisodeResult {
    fn empty() -> Self {
        EpisodeResult {
            success: false,
            failure: FailureReason::None,
            executed_actions: 0,
            planning_time: 0.0,
            execution_time: 0.0,
            total_time: 0.0,
            executed_speeds: Vec::new(),
            cycles: Vec::new(),
        }
    }
}

/// Candidate action counts: linear schedule from n_min to n_max. A single
/// candidate gets the full horizon (the safest choice, mirroring the
/// slower-wins tie-break).
pub fn candidate_lengths(n_min: usize, n_max: usize, count: usize) -> Vec<usize> {
    assert!(count >= 1 && n_min >= 1 && n_min <= n_max);
    if count == 1 {
        return vec![n_max];
    }
    (0..count)
        .map(|k| {
            let frac = (n_max - n_min) as f64 / (count - 1) as f64 * k as f64;
            frac.ceil() as usize + n_min
        })
        .collect()
}

/// Straight-line distance the constant-velocity profile has to cover
/// (approach gap plus carry distance) and its direction from the robot's
/// task reference point: the palm push surface for pushing, the fingertip
/// midpoint for grasping.
fn goal_line(world: &World, state: &WorldState, task: Task) -> Result<(f64, Vec2), WorldError> {
    let target = state
        .objects
        .get(task.target)
        .ok_or(WorldError::BadIndex(task.target, state.objects.len()))?;
    match task.kind {
        TaskKind::Push => {
            let goal = world.table.goal.as_ref().ok_or(WorldError::NoGoal)?;
            let surface = world.gripper.push_surface(&state.robot);
            let object = target.position();
            let gap = (object.distance(surface) - target.shape.bounding_radius()).max(0.0);
            let distance = goal.center.distance(object) + gap;
            Ok((distance, (goal.center - surface).normalized()))
        }
        TaskKind::Grasp => {
            let reference = world.gripper.reference_point(&state.robot);
            let object = target.position();
            Ok((object.distance(reference), (object - reference).normalized()))
        }
    }
}

fn constant_profile(
    world: &World,
    direction: Vec2,
    speed: f64,
    actions: usize,
    duration: f64,
) -> ControlSequence {
    let v = direction.scale(speed);
    let joints = world.limits.clamp_joints([v.x, v.y, 0.0, 0.0]);
    ControlSequence(vec![Control::from_joints(joints, duration); actions])
}

/// Candidate sequences for one planning cycle: `count` sequences whose
/// action counts rise linearly across the range, each a constant-velocity
/// straight-line profile covering the distance to the goal.
fn fresh_candidates(
    world: &World,
    state: &WorldState,
    task: Task,
    params: &PlannerParams,
    count: usize,
) -> Result<Vec<ControlSequence>, WorldError> {
    let (n_min, n_max) = params.length_range();
    let (distance, direction) = goal_line(world, state, task)?;
    Ok(candidate_lengths(n_min, n_max, count)
        .into_iter()
        .map(|n| {
            let speed = distance / (n as f64 * params.control_duration);
            constant_profile(world, direction, speed, n, params.control_duration)
        })
        .collect())
}

/// N candidate action sequences (public contract: N >= 2, goal defined).
pub fn get_action_sequences(
    world: &World,
    state: &WorldState,
    task: Task,
    params: &PlannerParams,
) -> Result<Vec<ControlSequence>, PlanError> {
    if params.candidates < 2 {
        return Err(PlanError::TooFewCandidates(params.candidates));
    }
    Ok(fresh_candidates(world, state, task, params, params.candidates)?)
}

/// Run the trajectory optimizer independently on each candidate; output
/// order matches input order.
pub fn get_opt_action_sequences(
    setup: &PlanSetup,
    state: &WorldState,
    candidates: &[ControlSequence],
    opt: &OptParams,
    seed: u64,
    cycle: usize,
) -> Result<Vec<OptimizeOutcome>, WorldError> {
    candidates
        .par_iter()
        .enumerate()
        .map(|(i, candidate)| {
            let sub_seed = rng::derive(seed, &[salt::OPTIMIZER, cycle as u64, i as u64]);
            trajopt::optimize(setup, state, candidate, opt, sub_seed)
        })
        .collect()
}

/// Deterministic argmin with ties resolved toward the candidate with more
/// actions (the slower one), then toward the lower index.
pub fn select_candidate(values: &[f64], lengths: &[usize]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] < values[best]
            || (values[i] == values[best] && lengths[i] > lengths[best])
        {
            best = i;
        }
    }
    best
}

pub struct Evaluation {
    pub chosen: usize,
    pub values: Vec<f64>,
    pub sim_time: f64,
}

/// Evaluate each candidate's first action by propagating it Q times through
/// the stochastic step plus settling, averaging running cost plus the
/// planned value-to-go, and taking the argmin.
pub fn evaluate_first_actions(
    setup: &PlanSetup,
    state: &WorldState,
    optimized: &[OptimizeOutcome],
    q_samples: usize,
    noise: &NoiseModel,
    value_mode: ValueMode,
    seed: u64,
    cycle: usize,
) -> Result<Evaluation, WorldError> {
    assert!(q_samples >= 1 && !optimized.is_empty());
    let exclude = setup.task.disturbance_exclusion();
    let per_candidate: Vec<(f64, f64)> = optimized
        .par_iter()
        .enumerate()
        .map(|(i, outcome)| {
            let control = *outcome
                .sequence
                .first()
                .expect("optimized sequences are non-empty");
            let offset = match value_mode {
                // For a one-action plan the remaining value is the planned
                // terminal cost; dropping it would make a goal-missing fast
                // action look free.
                ValueMode::SuffixFromSecond => match outcome.rollout.suffix_values.get(1) {
                    Some(v) => *v,
                    None => outcome.rollout.terminal,
                },
                ValueMode::PaperLiteral => outcome.rollout.suffix_values[0],
            };
            let mut value = 0.0;
            let mut sim = 0.0;
            for s in 0..q_samples {
                let mut stream =
                    rng::stream(seed, &[salt::QSAMPLE, cycle as u64, i as u64, s as u64]);
                let stepped = setup
                    .world
                    .step_stochastic(state, &control, noise, &mut stream)?;
                let settled = setup.world.settle(&stepped, setup.t_rest)?;
                sim += settled.time - state.time;
                value += costs::running_cost(
                    state,
                    &settled,
                    &control,
                    setup.costs,
                    &setup.world.table,
                    exclude,
                ) + offset;
            }
            Ok((value / q_samples as f64, sim))
        })
        .collect::<Result<_, WorldError>>()?;
    let values: Vec<f64> = per_candidate.iter().map(|(v, _)| *v).collect();
    let sim_time: f64 = per_candidate.iter().map(|(_, s)| *s).sum();
    let lengths: Vec<usize> = optimized.iter().map(|o| o.sequence.len()).collect();
    Ok(Evaluation {
        chosen: select_candidate(&values, &lengths),
        values,
        sim_time,
    })
}

/// Candidates for the cycle after executing `winner[0]`: MPC warm-starts the
/// padded suffix; the MDP solver regenerates N-1 fresh sequences from the
/// new state and appends the winner's remaining suffix (dropped once empty).
pub fn regenerate_candidates(
    world: &World,
    state: &WorldState,
    task: Task,
    params: &PlannerParams,
    winner: &ControlSequence,
) -> Result<Vec<ControlSequence>, WorldError> {
    let suffix = winner.suffix();
    if params.method == Method::Mpc {
        return Ok(vec![pad_to_horizon(
            suffix,
            params.n_max,
            params.control_duration,
        )]);
    }
    let fresh_count = if suffix.is_empty() {
        (params.candidates - 1).max(1)
    } else {
        params.candidates - 1
    };
    let mut next = if fresh_count > 0 {
        fresh_candidates(world, state, task, params, fresh_count)?
    } else {
        Vec::new()
    };
    if !suffix.is_empty() {
        next.push(suffix);
    }
    Ok(next)
}

fn pad_to_horizon(suffix: ControlSequence, horizon: usize, duration: f64) -> ControlSequence {
    let mut actions = suffix.0;
    while actions.len() < horizon {
        actions.push(Control::zero(duration));
    }
    ControlSequence(actions)
}

/// Quasi-static constant-velocity initialization for the MPC baseline.
fn mpc_candidate(
    world: &World,
    state: &WorldState,
    task: Task,
    params: &PlannerParams,
) -> Result<ControlSequence, WorldError> {
    let (_, direction) = goal_line(world, state, task)?;
    Ok(constant_profile(
        world,
        direction,
        params.quasi_static_speed,
        params.n_max,
        params.control_duration,
    ))
}

/// Run one episode with the configured method. All randomness flows from
/// `seed`; given the same scene, parameters, and seed the episode is
/// bit-reproducible.
pub fn run_episode(
    scene: &SceneSpec,
    params: &PlannerParams,
    opt: &OptParams,
    cost_params: &CostParams,
    seed: u64,
    mut trace: Option<&mut TraceWriter>,
) -> Result<EpisodeResult, PlanError> {
    params.validate()?;
    scene.validate().map_err(|e| PlanError::Scene(e.to_string()))?;
    let world = scene.world();
    let task = scene.task();
    let noise = scene.noise();
    let setup = PlanSetup {
        world: &world,
        task,
        costs: cost_params,
        t_rest: params.t_rest,
    };
    let mut state = scene.initial_state();
    let mut result = EpisodeResult::empty();
    let mut planning_sim = 0.0;

    if let Some(w) = trace.as_deref_mut() {
        w.frame(&state);
    }

    // The completion check precedes any action.
    if task.complete(&world, &state)? {
        result.success = true;
        return Ok(result);
    }

    let is_mpc = params.method == Method::Mpc;
    let mut candidates: Vec<ControlSequence> = if is_mpc {
        vec![mpc_candidate(&world, &state, task, params)?]
    } else {
        fresh_candidates(&world, &state, task, params, params.candidates)?
    };

    let mut cycle = 0usize;
    loop {
        let total = planning_sim * params.planning_time_rate + result.execution_time;
        if total >= params.timeout {
            result.failure = FailureReason::Timeout;
            break;
        }

        let optimized = get_opt_action_sequences(&setup, &state, &candidates, opt, seed, cycle)?;
        planning_sim += optimized.iter().map(|o| o.sim_time).sum::<f64>();

        let evaluation = if is_mpc {
            Evaluation {
                chosen: 0,
                values: vec![optimized[0].rollout.total()],
                sim_time: 0.0,
            }
        } else {
            evaluate_first_actions(
                &setup,
                &state,
                &optimized,
                params.samples,
                &noise,
                params.value_mode,
                seed,
                cycle,
            )?
        };
        planning_sim += evaluation.sim_time;

        let winner = &optimized[evaluation.chosen];
        let action = *winner.sequence.first().expect("non-empty winner");
        let decision = Decision {
            cycle,
            lengths: optimized.iter().map(|o| o.sequence.len()).collect(),
            values: evaluation.values.clone(),
            chosen: evaluation.chosen,
            speed: action.norm(),
        };
        if let Some(w) = trace.as_deref_mut() {
            w.decision(decision.clone());
        }
        result.cycles.push(decision);

        // Execute the chosen first action in the stochastic execution
        // environment, then let the scene settle.
        let mut exec_rng = rng::stream(seed, &[salt::EXECUTION, result.executed_actions as u64]);
        let before = state.time;
        state = match trace.as_deref_mut() {
            Some(w) => {
                let stepped = world.step_stochastic_traced(
                    &state,
                    &action,
                    &noise,
                    &mut exec_rng,
                    &mut |s| w.frame(s),
                )?;
                world.settle_traced(&stepped, params.t_rest, &mut |s| w.frame(s))?
            }
            None => {
                let stepped = world.step_stochastic(&state, &action, &noise, &mut exec_rng)?;
                world.settle(&stepped, params.t_rest)?
            }
        };
        result.execution_time += state.time - before;
        result.executed_actions += 1;
        result.executed_speeds.push(action.norm());

        if state.objects.iter().any(|o| o.fallen) {
            result.failure = FailureReason::ObjectFell;
            break;
        }
        if task.complete(&world, &state)? {
            result.success = true;
            break;
        }
        let total = planning_sim * params.planning_time_rate + result.execution_time;
        if total >= params.timeout {
            result.failure = FailureReason::Timeout;
            break;
        }

        candidates = regenerate_candidates(&world, &state, task, params, &winner.sequence)?;
        cycle += 1;
    }

    result.planning_time = planning_sim * params.planning_time_rate;
    result.total_time = result.planning_time + result.execution_time;
    Ok(result)
}

/// The task-adaptive online MDP solver.
pub fn run_tampc(
    scene: &SceneSpec,
    params: &PlannerParams,
    opt: &OptParams,
    cost_params: &CostParams,
    seed: u64,
    trace: Option<&mut TraceWriter>,
) -> Result<EpisodeResult, PlanError> {
    let params = PlannerParams {
        method: Method::Tampc,
        ..params.clone()
    };
    run_episode(scene, &params, opt, cost_params, seed, trace)
}

/// Receding-horizon MPC baseline: single quasi-static candidate, no
/// uncertainty sampling, warm-started suffix.
pub fn run_mpc(
    scene: &SceneSpec,
    params: &PlannerParams,
    opt: &OptParams,
    cost_params: &CostParams,
    seed: u64,
    trace: Option<&mut TraceWriter>,
) -> Result<EpisodeResult, PlanError> {
    let params = PlannerParams {
        method: Method::Mpc,
        ..params.clone()
    };
    run_episode(scene, &params, opt, cost_params, seed, trace)
}

/// Uncertainty-aware MPC baseline: the MDP solver restricted to the slowest
/// candidate length (n_min forced to n_max).
pub fn run_uampc(
    scene: &SceneSpec,
    params: &PlannerParams,
    opt: &OptParams,
    cost_params: &CostParams,
    seed: u64,
    trace: Option<&mut TraceWriter>,
) -> Result<EpisodeResult, PlanError> {
    let params = PlannerParams {
        method: Method::Uampc,
        ..params.clone()
    };
    run_episode(scene, &params, opt, cost_params, seed, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_length_schedule() {
        assert_eq!(candidate_lengths(2, 4, 2), vec![2, 4]);
        assert_eq!(candidate_lengths(2, 10, 5), vec![2, 4, 6, 8, 10]);
        assert_eq!(candidate_lengths(1, 20, 4), vec![1, 8, 14, 20]);
        assert_eq!(candidate_lengths(5, 5, 3), vec![5, 5, 5]);
        assert_eq!(candidate_lengths(2, 9, 1), vec![9]);
    }

    #[test]
    fn selection_argmin_and_ties() {
        assert_eq!(select_candidate(&[3.0, 2.0, 4.0], &[1, 2, 3]), 1);
        // Tie resolves toward more actions.
        assert_eq!(select_candidate(&[2.0, 2.0], &[1, 5]), 1);
        assert_eq!(select_candidate(&[2.0, 2.0], &[5, 1]), 0);
        // Equal value and length: first wins.
        assert_eq!(select_candidate(&[2.0, 2.0], &[3, 3]), 0);
    }

    #[test]
    fn selection_invariant_under_constant_shift() {
        let values = [4.0, 1.5, 2.0, 9.0];
        let lengths = [1, 4, 8, 20];
        let base = select_candidate(&values, &lengths);
        for shift in [-3.0, 0.5, 100.0] {
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            assert_eq!(select_candidate(&shifted, &lengths), base);
        }
    }
}
