//! Servo engineering toolkit for a German-equatorial telescope mount.
//!
//! The crate covers the whole desk-scale pipeline for the two mount axes
//! (ascension and declination):
//!
//! * [`lti`]: transfer functions, state-space realizations, ZOH discretization
//!   and discrete simulation.
//! * [`sysid`]: second-order black-box identification from PWM-frequency /
//!   velocity logs, scored with fit percentage, FPE and MSE.
//! * [`control`]: parallel PID with conditional-integration anti-windup and
//!   state feedback with an integral channel, plus pole placement and a
//!   deterministic PID tuner.
//! * [`simloop`]: closed-loop simulation with saturation, disturbances and
//!   trace capture.
//! * [`metrics`]: step-response metrics and requirement checks.
//! * [`kinematics`]: direct/inverse mount kinematics and workspace sampling.
//! * [`config`] and [`cli`]: JSON/CSV file formats and the `gemservo` binary.

pub mod cli;
pub mod config;
pub mod control;
mod error;
pub mod kinematics;
pub mod lti;
pub mod metrics;
pub mod simloop;
pub mod sysid;

pub use error::{Error, Result};
