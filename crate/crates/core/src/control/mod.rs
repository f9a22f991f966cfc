//! Controllers for the mount axes: parallel PID with conditional-integration
//! anti-windup, and state feedback with an integral channel.

mod pid;
mod state_feedback;
mod tuning;

use serde::{Deserialize, Serialize};

use crate::metrics::constants::ACTUATOR_MAX_HZ;
use crate::{Error, Result};

pub use pid::{pid_step, Pid, PidGains, PidOutput, PidState, DEFAULT_DERIV_FILTER_N};
pub use state_feedback::{
    closed_loop_matrix, eigenvalues, overshoot_to_zeta, place_poles, sf_step, PoleDesign, SfOutput,
    StateFeedbackGains,
};
pub use tuning::{tune_pid, TuningProblem};

/// Actuator limits in PWM frequency, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    #[serde(rename = "umin")]
    pub min: f64,
    #[serde(rename = "umax")]
    pub max: f64,
}

impl Limits {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let l = Limits { min, max };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.is_nan() || self.max.is_nan() || !(self.min < self.max) {
            return Err(Error::invalid(format!(
                "actuator limits need umin < umax, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    /// Unidirectional PWM drive: `[0, 350 kHz]`.
    pub fn pwm() -> Self {
        Limits {
            min: 0.0,
            max: ACTUATOR_MAX_HZ,
        }
    }

    /// Direction-reversing drive: `[-350 kHz, 350 kHz]`.
    pub fn bidirectional() -> Self {
        Limits {
            min: -ACTUATOR_MAX_HZ,
            max: ACTUATOR_MAX_HZ,
        }
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.min, self.max)
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

impl Default for Limits {
    fn default() -> Self {
        Limits::pwm()
    }
}
