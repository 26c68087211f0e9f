//! Stochastic trajectory optimization over the deterministic world model:
//! noisy rollouts, greedy or cost-weighted trajectory updates, and the
//! suffix-sum value approximation along the incumbent trajectory.

use crate::costs::{self, CostParams, Task};
use crate::rng::{self, salt};
use crate::world::{Control, World, WorldError, WorldState};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Ordered control sequence U with the paper-style accessors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence(pub Vec<Control>);

impl ControlSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&Control> {
        self.0.first()
    }

    /// The remaining portion U[1 : n-1].
    pub fn suffix(&self) -> ControlSequence {
        ControlSequence(self.0[1.min(self.0.len())..].to_vec())
    }
}

/// Which trajectory-update rule to apply to the K noisy rollouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Take the lowest-cost variation (works better for small K).
    Greedy,
    /// Per-step cost-weighted convex combination of the variations.
    Weighted,
}

/// Optimizer parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptParams {
    /// K: noisy rollouts per iteration.
    pub rollouts: usize,
    /// Per-joint sampling variance nu [(m/s)^2 x2, (rad/s)^2, (m/s)^2].
    pub variance: [f64; 4],
    /// Total-cost success threshold; `None` derives k_act * n + 0.01.
    pub cost_threshold: Option<f64>,
    /// I_max.
    pub max_iterations: usize,
    /// Exponentiation temperature lambda (weighted update only).
    pub temperature: f64,
    pub update: UpdateRule,
}

impl Default for OptParams {
    fn default() -> Self {
        OptParams {
            rollouts: 8,
            variance: [0.08 * 0.08, 0.08 * 0.08, 0.3 * 0.3, 0.0],
            cost_threshold: None,
            max_iterations: 20,
            temperature: 1.0,
            update: UpdateRule::Greedy,
        }
    }
}

impl OptParams {
    /// Variance defaults for a task: pushing keeps the gripper channel
    /// frozen, grasping perturbs it.
    pub fn for_task(kind: crate::costs::TaskKind) -> Self {
        let mut p = OptParams::default();
        if kind == crate::costs::TaskKind::Grasp {
            p.variance[3] = 0.05 * 0.05;
        }
        p
    }

    pub fn threshold_for(&self, horizon: usize, costs: &CostParams) -> f64 {
        self.cost_threshold
            .unwrap_or(costs.action_cost * horizon as f64 + 0.01)
    }
}

/// Everything a rollout needs besides the state and controls.
#[derive(Clone, Copy)]
pub struct PlanSetup<'a> {
    pub world: &'a World,
    pub task: Task,
    pub costs: &'a CostParams,
    /// Post-action settling time [s].
    pub t_rest: f64,
}

/// One rollout: the visited states, per-step costs, and suffix values.
#[derive(Clone, Debug)]
pub struct RolloutResult {
    /// n + 1 states (x_0 .. x_n).
    pub states: Vec<WorldState>,
    /// n per-step costs; the last entry includes the weighted terminal cost.
    pub costs: Vec<f64>,
    /// Suffix sums: suffix_values[j] = sum of costs[j..n].
    pub suffix_values: Vec<f64>,
    /// The weighted terminal cost folded into the last step.
    pub terminal: f64,
}

impl RolloutResult {
    pub fn from_parts(states: Vec<WorldState>, costs: Vec<f64>) -> Self {
        Self::with_terminal(states, costs, 0.0)
    }

    pub fn with_terminal(states: Vec<WorldState>, costs: Vec<f64>, terminal: f64) -> Self {
        let mut suffix_values = vec![0.0; costs.len()];
        let mut acc = 0.0;
        for (j, c) in costs.iter().enumerate().rev() {
            acc += c;
            suffix_values[j] = acc;
        }
        RolloutResult {
            states,
            costs,
            suffix_values,
            terminal,
        }
    }

    pub fn total(&self) -> f64 {
        self.suffix_values.first().copied().unwrap_or(0.0)
    }

    /// Simulated seconds consumed by the rollout.
    pub fn sim_duration(&self) -> f64 {
        match (self.states.first(), self.states.last()) {
            (Some(a), Some(b)) => b.time - a.time,
            _ => 0.0,
        }
    }
}

/// Roll a control sequence out under deterministic physics, settling after
/// each action; per-step running costs, with the weighted terminal cost
/// added to the final step.
pub fn trajectory_rollout(
    setup: &PlanSetup,
    x0: &WorldState,
    sequence: &ControlSequence,
) -> Result<RolloutResult, WorldError> {
    let n = sequence.len();
    let mut states = Vec::with_capacity(n + 1);
    let mut step_costs = Vec::with_capacity(n);
    states.push(x0.clone());
    let exclude = setup.task.disturbance_exclusion();
    let mut terminal = 0.0;
    for (t, control) in sequence.0.iter().enumerate() {
        let prev = states.last().unwrap();
        let stepped = setup.world.step_deterministic(prev, control)?;
        let next = setup.world.settle(&stepped, setup.t_rest)?;
        let mut c = costs::running_cost(
            prev,
            &next,
            control,
            setup.costs,
            &setup.world.table,
            exclude,
        );
        if t == n - 1 {
            terminal = setup.costs.terminal_weight
                * setup.task.terminal_cost(setup.world, &next, setup.costs)?;
            c += terminal;
        }
        step_costs.push(c);
        states.push(next);
    }
    Ok(RolloutResult::with_terminal(states, step_costs, terminal))
}

/// Add zero-mean Gaussian noise (per-joint std sqrt(nu)) to every action,
/// clamping to the speed limits. Returns the perturbed sequence and the
/// post-clamp variation actually applied.
pub fn perturb(
    sequence: &ControlSequence,
    variance: &[f64; 4],
    limits: &crate::world::SpeedLimits,
    rng: &mut dyn RngCore,
) -> (ControlSequence, Vec<[f64; 4]>) {
    let std: Vec<f64> = variance.iter().map(|v| v.sqrt()).collect();
    let mut out = Vec::with_capacity(sequence.len());
    let mut variations = Vec::with_capacity(sequence.len());
    for control in &sequence.0 {
        let before = control.joints();
        let mut after = before;
        for (j, value) in after.iter_mut().enumerate() {
            if std[j] > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                *value += z * std[j];
            }
        }
        let after = limits.clamp_joints(after);
        let mut delta = [0.0; 4];
        for j in 0..4 {
            delta[j] = after[j] - before[j];
        }
        out.push(Control::from_joints(after, control.duration));
        variations.push(delta);
    }
    (ControlSequence(out), variations)
}

/// Greedy update: U + the variation of the lowest-total-cost rollout; ties
/// go to the lowest index.
pub fn update_greedy(
    sequence: &ControlSequence,
    variations: &[Vec<[f64; 4]>],
    totals: &[f64],
) -> ControlSequence {
    debug_assert_eq!(variations.len(), totals.len());
    let mut best = 0;
    for (k, &c) in totals.iter().enumerate() {
        if c < totals[best] {
            best = k;
        }
    }
    apply_variation(sequence, &variations[best])
}

/// Cost-weighted update: per timestep, a softmax-weighted convex combination
/// of the variations (per-step costs are shifted by their minimum before
/// exponentiation; the shift cancels in the ratio).
pub fn update_weighted(
    sequence: &ControlSequence,
    variations: &[Vec<[f64; 4]>],
    step_costs: &[Vec<f64>],
    temperature: f64,
) -> ControlSequence {
    let k_count = variations.len();
    let mut out = Vec::with_capacity(sequence.len());
    for (t, control) in sequence.0.iter().enumerate() {
        let min_c = step_costs
            .iter()
            .map(|c| c[t])
            .fold(f64::INFINITY, f64::min);
        let mut weight_sum = 0.0;
        let mut delta = [0.0; 4];
        for k in 0..k_count {
            let w = (-(step_costs[k][t] - min_c) / temperature).exp();
            weight_sum += w;
            for j in 0..4 {
                delta[j] += w * variations[k][t][j];
            }
        }
        let mut joints = control.joints();
        for j in 0..4 {
            joints[j] += delta[j] / weight_sum;
        }
        out.push(Control::from_joints(joints, control.duration));
    }
    ControlSequence(out)
}

fn apply_variation(sequence: &ControlSequence, variation: &[[f64; 4]]) -> ControlSequence {
    ControlSequence(
        sequence
            .0
            .iter()
            .zip(variation.iter())
            .map(|(c, d)| {
                let mut joints = c.joints();
                for j in 0..4 {
                    joints[j] += d[j];
                }
                Control::from_joints(joints, c.duration)
            })
            .collect(),
    )
}

/// Outcome of [`optimize`]: the incumbent sequence, its rollout, how much
/// simulated planning time the search consumed, and the incumbent total
/// cost after each iteration.
pub struct OptimizeOutcome {
    pub sequence: ControlSequence,
    pub rollout: RolloutResult,
    pub sim_time: f64,
    pub history: Vec<f64>,
}

/// Iteratively improve a candidate control sequence: K noisy rollouts, a
/// trajectory update, and accept-only-if-cheaper; stops at the iteration cap
/// or once the incumbent total reaches the success threshold.
pub fn optimize(
    setup: &PlanSetup,
    x0: &WorldState,
    initial: &ControlSequence,
    params: &OptParams,
    seed: u64,
) -> Result<OptimizeOutcome, WorldError> {
    assert!(!initial.is_empty(), "optimize needs a non-empty sequence");
    let threshold = params.threshold_for(initial.len(), setup.costs);
    let mut incumbent = initial.clone();
    let mut best = trajectory_rollout(setup, x0, &incumbent)?;
    let mut sim_time = best.sim_duration();
    let mut history = vec![best.total()];

    for iteration in 0..params.max_iterations {
        if best.total() <= threshold {
            break;
        }
        let samples: Vec<(ControlSequence, Vec<[f64; 4]>, RolloutResult)> = (0..params.rollouts)
            .into_par_iter()
            .map(|k| {
                let mut stream =
                    rng::stream(seed, &[salt::ROLLOUT, iteration as u64, k as u64]);
                let (candidate, variation) =
                    perturb(&incumbent, &params.variance, &setup.world.limits, &mut stream);
                let rollout = trajectory_rollout(setup, x0, &candidate)?;
                Ok((candidate, variation, rollout))
            })
            .collect::<Result<_, WorldError>>()?;
        sim_time += samples.iter().map(|s| s.2.sim_duration()).sum::<f64>();

        let variations: Vec<Vec<[f64; 4]>> = samples.iter().map(|s| s.1.clone()).collect();
        let updated = match params.update {
            UpdateRule::Greedy => {
                let totals: Vec<f64> = samples.iter().map(|s| s.2.total()).collect();
                update_greedy(&incumbent, &variations, &totals)
            }
            UpdateRule::Weighted => {
                let step_costs: Vec<Vec<f64>> =
                    samples.iter().map(|s| s.2.costs.clone()).collect();
                update_weighted(&incumbent, &variations, &step_costs, params.temperature)
            }
        };
        let candidate_rollout = trajectory_rollout(setup, x0, &updated)?;
        sim_time += candidate_rollout.sim_duration();
        if candidate_rollout.total() < best.total() {
            incumbent = updated;
            best = candidate_rollout;
        }
        history.push(best.total());
    }

    Ok(OptimizeOutcome {
        sequence: incumbent,
        rollout: best,
        sim_time,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::world::SpeedLimits;

    #[test]
    fn suffix_sums_match_oracle() {
        // Independent oracle: explicit forward sums.
        let costs = vec![3.0, 2.0, 1.0];
        let oracle: Vec<f64> = (0..costs.len())
            .map(|j| costs[j..].iter().sum::<f64>())
            .collect();
        let r = RolloutResult::from_parts(vec![], costs);
        assert_eq!(r.suffix_values, oracle);
        assert_eq!(r.suffix_values, vec![6.0, 3.0, 1.0]);
        assert_eq!(r.total(), 6.0);
    }

    #[test]
    fn suffix_identity_holds() {
        let costs = vec![0.5, 4.0, 2.25, 1.0, 7.5];
        let r = RolloutResult::from_parts(vec![], costs.clone());
        for j in 0..costs.len() - 1 {
            assert_eq!(r.suffix_values[j] - r.suffix_values[j + 1], costs[j]);
        }
        assert_eq!(*r.suffix_values.last().unwrap(), *costs.last().unwrap());
    }

    #[test]
    fn perturb_zero_variance_is_identity() {
        let seq = ControlSequence(vec![Control::from_joints([0.1, 0.0, 0.0, 0.0], 1.0); 3]);
        let limits = SpeedLimits::default();
        let mut rng = stream(1, &[0]);
        let (out, delta) = perturb(&seq, &[0.0; 4], &limits, &mut rng);
        assert_eq!(out, seq);
        assert!(delta.iter().all(|d| d.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn perturb_std_matches_request() {
        let seq = ControlSequence(vec![Control::zero(1.0)]);
        let limits = SpeedLimits::default();
        let variance = [0.05 * 0.05, 0.0, 0.0, 0.0];
        let mut rng = stream(2, &[0]);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let (_, delta) = perturb(&seq, &variance, &limits, &mut rng);
            sum += delta[0][0];
            sum_sq += delta[0][0] * delta[0][0];
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!(
            (std - 0.05).abs() / 0.05 < 0.02,
            "empirical std {std} vs 0.05"
        );
    }

    #[test]
    fn perturb_clamps_at_speed_limit() {
        let limits = SpeedLimits::default();
        let seq = ControlSequence(vec![Control::from_joints([1.0, 0.0, 0.0, 0.0], 1.0)]);
        let mut rng = stream(3, &[0]);
        for _ in 0..200 {
            let (out, delta) = perturb(&seq, &[0.04, 0.0, 0.0, 0.0], &limits, &mut rng);
            assert!(out.0[0].vx <= limits.linear + 1e-12);
            // Recorded variation must reproduce the clamped value.
            assert!((1.0 + delta[0][0] - out.0[0].vx).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_update_picks_argmin_with_tiebreak() {
        let seq = ControlSequence(vec![Control::zero(1.0)]);
        let v0 = vec![[0.1, 0.0, 0.0, 0.0]];
        let v1 = vec![[0.2, 0.0, 0.0, 0.0]];
        let out = update_greedy(&seq, &[v0.clone(), v1.clone()], &[5.0, 3.0]);
        assert!((out.0[0].vx - 0.2).abs() < 1e-12);
        let out = update_greedy(&seq, &[v0.clone(), v1.clone()], &[4.0, 4.0]);
        assert!((out.0[0].vx - 0.1).abs() < 1e-12);
        let out = update_greedy(&seq, &[v1], &[9.0]);
        assert!((out.0[0].vx - 0.2).abs() < 1e-12);
    }

    #[test]
    fn weighted_update_equal_costs_is_mean() {
        let seq = ControlSequence(vec![Control::zero(1.0)]);
        let v0 = vec![[0.1, 0.0, 0.0, 0.0]];
        let v1 = vec![[0.3, 0.0, 0.0, 0.0]];
        let out = update_weighted(&seq, &[v0, v1], &[vec![2.0], vec![2.0]], 1.0);
        assert!((out.0[0].vx - 0.2).abs() < 1e-12);
    }

    #[test]
    fn weighted_update_exact_two_sample_weights() {
        // Costs 0 and ln 3 at temperature 1: weights 1 and 1/3, normalized
        // to 0.75 and 0.25.
        let seq = ControlSequence(vec![Control::zero(1.0)]);
        let v0 = vec![[0.4, 0.0, 0.0, 0.0]];
        let v1 = vec![[0.0, 0.4, 0.0, 0.0]];
        let out = update_weighted(
            &seq,
            &[v0, v1],
            &[vec![0.0], vec![3.0f64.ln()]],
            1.0,
        );
        assert!((out.0[0].vx - 0.3).abs() < 1e-12, "vx {}", out.0[0].vx);
        assert!((out.0[0].vy - 0.1).abs() < 1e-12, "vy {}", out.0[0].vy);
    }

    #[test]
    fn weighted_update_flattens_at_high_temperature() {
        let seq = ControlSequence(vec![Control::zero(1.0)]);
        let v0 = vec![[0.1, 0.0, 0.0, 0.0]];
        let v1 = vec![[0.3, 0.0, 0.0, 0.0]];
        let out = update_weighted(&seq, &[v0, v1], &[vec![0.0], vec![10.0]], 1e9);
        assert!((out.0[0].vx - 0.2).abs() < 1e-6);
    }

    #[test]
    fn weighted_update_stays_in_convex_hull() {
        let seq = ControlSequence(vec![Control::from_joints([0.05, -0.02, 0.1, 0.0], 1.0); 4]);
        let limits = SpeedLimits::default();
        let mut rng = stream(11, &[0]);
        let mut variations = Vec::new();
        let mut step_costs = Vec::new();
        for k in 0..6 {
            let (_, v) = perturb(&seq, &[0.01, 0.01, 0.04, 0.0], &limits, &mut rng);
            variations.push(v);
            step_costs.push(vec![k as f64 * 0.37; 4]);
        }
        let out = update_weighted(&seq, &variations, &step_costs, 0.7);
        for t in 0..seq.len() {
            let base = seq.0[t].joints();
            let got = out.0[t].joints();
            for j in 0..4 {
                let lo = variations
                    .iter()
                    .map(|v| v[t][j])
                    .fold(f64::INFINITY, f64::min);
                let hi = variations
                    .iter()
                    .map(|v| v[t][j])
                    .fold(f64::NEG_INFINITY, f64::max);
                let delta = got[j] - base[j];
                assert!(delta >= lo - 1e-12 && delta <= hi + 1e-12);
            }
        }
    }
}
