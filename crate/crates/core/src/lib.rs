//! Planar pushing and grasp-in-clutter planning toolkit.
//!
//! A self-contained 2-D tabletop simulator (kinematic gripper, disc/box
//! objects, Coulomb friction, impulse contacts) plus a task-adaptive online
//! planner that selects among candidate control sequences of different
//! speeds by Monte-Carlo evaluation under action-dependent velocity noise,
//! with stochastic trajectory optimization and MPC/UAMPC baselines.

pub mod bench;
pub mod costs;
pub mod math;
pub mod planner;
pub mod rng;
pub mod scenes;
pub mod trace;
pub mod trajopt;
pub mod world;
