//! Power-flow safety layer for fully actuated 6-DoF mechanical systems.
//!
//! A nominal pose or wrench tracking controller is wrapped by a safety filter
//! that estimates the largest Lyapunov exponent (LLE) of the closed-loop error
//! dynamics per degree of freedom, adapts a power-flow limit from it, and
//! enforces that limit with control barrier functions inside a small QP on the
//! jerk of the applied control wrench.
//!
//! The numeric core ([`mathcore`], [`dynamics`], [`controllers`], [`lle`],
//! [`qp`], [`safety`]) is generic over [`Real`]; [`sim`] and [`cli`] run on
//! `f64`. Concrete aliases for both precisions live at the crate root.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod controllers;
pub mod dynamics;
pub mod lle;
pub mod mathcore;
pub mod qp;
pub mod safety;
mod scalar;
pub mod sim;

pub use scalar::Real;

pub type Vec3d = mathcore::Vec3<f64>;
pub type Vec6d = mathcore::Vec6<f64>;
pub type Mat3d = mathcore::Mat3<f64>;
pub type Mat6d = mathcore::Mat6<f64>;
pub type Wrenchd = dynamics::Wrench<f64>;
pub type RigidBodyStated = dynamics::RigidBodyState<f64>;
pub type InertialParamsd = dynamics::InertialParams<f64>;
pub type QpProblemd = qp::QpProblem<f64>;
pub type QpSolutiond = qp::QpSolution<f64>;
pub type SafetyFilterd = safety::SafetyFilter<f64>;

pub type Vec3f = mathcore::Vec3<f32>;
pub type Vec6f = mathcore::Vec6<f32>;
pub type Mat3f = mathcore::Mat3<f32>;
pub type Mat6f = mathcore::Mat6<f32>;
pub type Wrenchf = dynamics::Wrench<f32>;
pub type QpProblemf = qp::QpProblem<f32>;
