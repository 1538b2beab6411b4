//! Uncertainty-compensated model predictive control.
//!
//! An L1 adaptive controller cancels the matched uncertainty of a
//! constrained linear plant, and the guaranteed gap between the adaptive
//! closed loop and its uncertainty-free nominal model is used to tighten the
//! state and input constraints of an MPC that runs on the nominal model.
//!
//! - [`lti`]: matrix exponential, realizations, induced `L∞` gains
//! - [`sets`]: interval boxes
//! - [`model`], [`f16`]: plant and uncertainty descriptions
//! - [`l1ac`]: adaptive controller runtime and its bound constants
//! - [`tightening`]: the design procedure that produces the tightened sets
//! - [`mpc`]: transcription, QP solver and controller variants
//! - [`sim`]: closed-loop simulation, logs and verdicts

pub mod f16;
pub mod l1ac;
pub mod lti;
pub mod model;
pub mod mpc;
pub mod sets;
pub mod sim;
pub mod tightening;
