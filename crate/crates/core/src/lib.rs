//! Whole-body nonlinear model predictive control through contacts for planar
//! articulated rigid-body systems.
//!
//! The crate bundles the full pipeline: analytic floating-base robot models,
//! a smooth spring-damper contact model folded into the dynamics, symplectic
//! integration with exact discrete sensitivities, a linear-time Riccati LQOC
//! solver, iLQR and Gauss-Newton multiple-shooting iterations, a real-time-
//! iteration MPC layer, and a simulated plant with mismatch, delay and
//! disturbances for closed-loop evaluation.

pub mod ad;
pub mod contact;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod lqoc;
pub mod model;
pub mod nloc;
pub mod policy;
pub mod validation;

pub use dynamics::{ContactDynamics, Dynamics};
pub use error::*;
pub use model::{RobotModel, RobotState};
pub use policy::Policy;
