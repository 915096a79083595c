//! Inverse kinematics for articulated skeletons by minimizing a weighted sum
//! of differentiable objectives with a bounded, cautious Adam optimizer.
//!
//! The pipeline is: load a [`Skeleton`], pick the controlled degrees of
//! freedom ([`DofLayout`]), build an [`ObjectiveSpec`], then call [`solve`]
//! for a single pose or [`plan`] for a smooth trajectory. Geometric
//! reference solvers live in [`baselines`] and the benchmark harness in
//! [`bench`].

pub mod assets;
pub mod baselines;
pub mod bench;
pub mod cli;
pub mod error;
pub mod export;
pub mod fk;
mod geom;
pub mod grad;
pub mod objectives;
pub mod planner;
pub mod skeleton;
pub mod solver;

pub use error::{IkError, Result};
pub use fk::{forward, GlobalPose, Transform};
pub use objectives::{Context, ObjectiveSpec, ObjectiveTerm};
pub use planner::{plan, PlanOptions, Trajectory};
pub use skeleton::{Axis, DofLayout, Skeleton};
pub use solver::{solve, SolveReport, SolverConfig, StopReason};
