//! Running cost of a transition (edge, disturbance, per-action terms), the
//! two task terminal costs, and the sample-averaged cost.

use crate::math::Vec2;
use crate::world::{GoalSpec, GripperGeom, TableSpec, World, WorldError, WorldState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("sample-average cost needs at least one sample")]
    EmptySamples,
}

/// Cost weights. All weights are unitless unless noted.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CostParams {
    /// Edge cost weight w_e.
    pub edge_weight: f64,
    /// Edge exponent gain k [1/m].
    pub edge_gain: f64,
    /// Disturbance weight w_s.
    pub disturbance_weight: f64,
    /// Constant cost per action k_act.
    pub action_cost: f64,
    /// Terminal cost weight w_f.
    pub terminal_weight: f64,
    /// Grasp angle weight w_phi [m^2/rad^2].
    pub angle_weight: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            edge_weight: 1.0,
            edge_gain: 10.0,
            disturbance_weight: 100.0,
            action_cost: 1.0,
            terminal_weight: 1000.0,
            angle_weight: 0.01,
        }
    }
}

/// What the episode is trying to achieve, and which object it is about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Push,
    Grasp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub kind: TaskKind,
    pub target: usize,
}

impl Task {
    /// The pushed object is excluded from the disturbance sum, otherwise the
    /// planner is penalized for progress itself.
    pub fn disturbance_exclusion(&self) -> Option<usize> {
        match self.kind {
            TaskKind::Push => Some(self.target),
            TaskKind::Grasp => None,
        }
    }

    pub fn complete(&self, world: &World, state: &WorldState) -> Result<bool, WorldError> {
        match self.kind {
            TaskKind::Push => world.in_goal(state, self.target),
            TaskKind::Grasp => world.grasped(state, self.target),
        }
    }

    /// Unweighted terminal cost L_f for this task.
    pub fn terminal_cost(
        &self,
        world: &World,
        state: &WorldState,
        params: &CostParams,
    ) -> Result<f64, WorldError> {
        match self.kind {
            TaskKind::Push => {
                let goal = world.table.goal.as_ref().ok_or(WorldError::NoGoal)?;
                let obj = state
                    .objects
                    .get(self.target)
                    .ok_or(WorldError::BadIndex(self.target, state.objects.len()))?;
                Ok(terminal_cost_push(obj.position(), goal))
            }
            TaskKind::Grasp => {
                let obj = state
                    .objects
                    .get(self.target)
                    .ok_or(WorldError::BadIndex(self.target, state.objects.len()))?;
                Ok(terminal_cost_grasp(
                    &state.robot,
                    &world.gripper,
                    obj.position(),
                    params,
                ))
            }
        }
    }
}

/// Edge cost: for every object whose next position is outside the safe zone,
/// w_e * exp(k * d_P) with d_P the object's displacement over the transition.
/// Objects inside the safe zone contribute nothing.
pub fn edge_cost(
    prev: &WorldState,
    next: &WorldState,
    params: &CostParams,
    table: &TableSpec,
) -> f64 {
    let mut cost = 0.0;
    for (p, n) in prev.objects.iter().zip(next.objects.iter()) {
        if table.in_safe_zone(n.position()) {
            continue;
        }
        let pushed = n.position().distance(p.position());
        cost += params.edge_weight * (params.edge_gain * pushed).exp();
    }
    cost
}

/// Disturbance cost: w_s * sum of squared position displacements (heading
/// excluded) over all objects except `exclude`.
pub fn disturbance_cost(
    prev: &WorldState,
    next: &WorldState,
    params: &CostParams,
    exclude: Option<usize>,
) -> f64 {
    let mut cost = 0.0;
    for (i, (p, n)) in prev.objects.iter().zip(next.objects.iter()).enumerate() {
        if Some(i) == exclude {
            continue;
        }
        cost += params.disturbance_weight * (n.position() - p.position()).norm_sq();
    }
    cost
}

/// Running cost L of one transition: edge + disturbance + k_act.
pub fn running_cost(
    prev: &WorldState,
    next: &WorldState,
    _control: &crate::world::Control,
    params: &CostParams,
    table: &TableSpec,
    exclude: Option<usize>,
) -> f64 {
    edge_cost(prev, next, params, table)
        + disturbance_cost(prev, next, params, exclude)
        + params.action_cost
}

/// Terminal cost for pushing: 0 on the closed goal disc, squared excess
/// distance outside it.
pub fn terminal_cost_push(object_center: Vec2, goal: &GoalSpec) -> f64 {
    let excess = object_center.distance(goal.center) - goal.radius;
    if excess > 0.0 {
        excess * excess
    } else {
        0.0
    }
}

/// Terminal cost for grasping: d_T^2 + w_phi * phi_T^2, where d_T is the
/// distance from the gripper reference point to the target and phi_T the
/// unsigned angle between the gripper's forward axis and that vector.
pub fn terminal_cost_grasp(
    robot: &crate::world::RobotState,
    gripper: &GripperGeom,
    target_center: Vec2,
    params: &CostParams,
) -> f64 {
    let reference = gripper.reference_point(robot);
    let v = target_center - reference;
    let d = v.norm();
    if d < 1e-12 {
        return 0.0;
    }
    let cos = (v.dot(robot.forward()) / d).clamp(-1.0, 1.0);
    let phi = cos.acos();
    d * d + params.angle_weight * phi * phi
}

/// Arithmetic mean of `running_cost` over the samples.
pub fn sample_average_cost(
    samples: &[(WorldState, WorldState, crate::world::Control)],
    params: &CostParams,
    table: &TableSpec,
    exclude: Option<usize>,
) -> Result<f64, CostError> {
    if samples.is_empty() {
        return Err(CostError::EmptySamples);
    }
    let total: f64 = samples
        .iter()
        .map(|(prev, next, control)| running_cost(prev, next, control, params, table, exclude))
        .sum();
    Ok(total / samples.len() as f64)
}
