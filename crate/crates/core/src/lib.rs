//! Sampling-based predictive control for torque-controlled serial manipulators.
//!
//! Two controllers share one rollout engine:
//!
//! * **vanilla MPPI**: Gaussian control sequences are rolled out through a
//!   joint-space double integrator, scored with a discounted sum of goal,
//!   regularization and hinge collision costs, and averaged with soft-min
//!   weights;
//! * **CaT-MPPI**: the additive collision penalty is replaced by
//!   constraints-as-terminations. Violations become per-stage termination
//!   hazards, and rollouts are scored by survival-weighted shifted rewards.
//!
//! The [`runner`] module closes the loop around either controller on six
//! bundled collision-avoidance scenarios and computes the benchmark metrics.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cat;
pub mod costs;
pub mod error;
pub mod geometry;
pub mod mppi;
pub mod robot;
pub mod runner;
pub mod scenario;
pub mod scene;

pub use error::{Error, Result};
