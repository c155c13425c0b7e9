//! Temporally coupled dynamical movement primitives over full Cartesian
//! pose.
//!
//! The crate provides, bottom up:
//!
//! - [`quaternion`]: unit-quaternion algebra on the full hypersphere,
//!   log/exp maps, the orientation difference map, and stereographic
//!   projection utilities.
//! - [`dmp`]: the coupled transformation and canonical systems with Gaussian
//!   basis forcing, as a derivative evaluator plus fixed-step integrators.
//! - [`learning`]: locally weighted regression from demonstrated pose
//!   trajectories, and synthetic demonstration generators.
//! - [`controller`]: filtered pose error, the adaptive time parameter, and
//!   the critically damped PD-plus-feedforward tracking law.
//! - [`sim`]: the closed-loop cascade against a double-integrator robot
//!   model, perturbation injection, episode logging and summaries.
//! - [`io`]: CSV and key-value text formats for demonstrations, models,
//!   episode logs and run configuration.

pub mod controller;
pub mod dmp;
pub mod io;
pub mod learning;
pub mod quaternion;
pub mod sim;

pub use controller::{ErrorFilterState, Gains};
pub use dmp::{CoupledState, DmpModel, Integrator, Pose};
pub use learning::Demonstration;
pub use quaternion::{quat_diff, DomainError, OrientationDiff, UnitQuaternion};
pub use sim::{run_episode, EpisodeConfig, EpisodeLog, Perturbation, RobotState};
