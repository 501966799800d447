//! Ballistic random walks in random environments: environments, walk
//! simulation, exact exit solves, renormalization scales and the checks built
//! on them.

// `!(x >= a)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod env;
pub mod geometry;
pub mod rng;
pub mod renorm;
pub mod solver;
pub mod stats;
pub mod towermath;
pub mod walk;

pub use env::{EnvError, Environment, EnvironmentLaw, Family, TransitionVector};
pub use geometry::{BoxSpec, PolyBox, Rotation, SiteClass, SlabExit};
pub use solver::{BoxSolution, SolverError};
pub use towermath::{Rounding, Sign, TowerError, TowerInterval, TowerReal};
pub use walk::{ExitLabel, ExitStats, Sampling, SlabEstimate, WalkOutcome};
