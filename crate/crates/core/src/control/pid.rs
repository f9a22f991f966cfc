use serde::{Deserialize, Serialize};

use super::Limits;
use crate::{Error, Result};

/// Default first-order derivative filter coefficient, rad/s.
pub const DEFAULT_DERIV_FILTER_N: f64 = 100.0;

/// Parallel-form PID gains with actuator limits.
///
/// Negative gains are allowed; the tabulated declination velocity design
/// uses a negative proportional gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub deriv_filter_n: f64,
    pub limits: Limits,
}

impl PidGains {
    pub fn new(kp: f64, ki: f64, kd: f64, deriv_filter_n: f64, limits: Limits) -> Result<Self> {
        let g = PidGains {
            kp,
            ki,
            kd,
            deriv_filter_n,
            limits,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.kp, self.ki, self.kd, self.deriv_filter_n].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("PID gains".into()));
        }
        if self.kd != 0.0 && self.deriv_filter_n <= 0.0 {
            return Err(Error::invalid("derivative filter coefficient must be positive"));
        }
        self.limits.validate()
    }

    /// Pure proportional controller with the given limits.
    pub fn proportional(kp: f64, limits: Limits) -> Result<Self> {
        PidGains::new(kp, 0.0, 0.0, DEFAULT_DERIV_FILTER_N, limits)
    }
}

/// Integrator and derivative-filter memory of a PID controller.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    /// Trapezoidal integral of the error, error units times seconds.
    pub integral: f64,
    pub deriv_filtered: f64,
    pub prev_error: f64,
}

impl PidState {
    pub fn reset(&mut self) {
        *self = PidState::default();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidOutput {
    pub u_command: f64,
    pub u_saturated: f64,
    pub state: PidState,
}

/// One controller sample.
///
/// `u = kp e + ki I + kd D`, where `I` is the trapezoidal error integral and
/// `D` the backward-Euler discretization of `N s / (s + N)` applied to the
/// error. Conditional integration: the integral increment is discarded when
/// the command would lie beyond a limit and the increment pushes it further
/// out.
pub fn pid_step(gains: &PidGains, state: &PidState, error: f64, ts: f64) -> Result<PidOutput> {
    if !error.is_finite() {
        return Err(Error::NonFinite("PID error input".into()));
    }
    if !(ts > 0.0) {
        return Err(Error::invalid("sampling period must be positive"));
    }
    let deriv_filtered = if gains.kd != 0.0 {
        let n = gains.deriv_filter_n;
        (state.deriv_filtered + n * (error - state.prev_error)) / (1.0 + n * ts)
    } else {
        0.0
    };
    let increment = 0.5 * ts * (error + state.prev_error);
    let base = gains.kp * error + gains.kd * deriv_filtered;

    let mut integral = state.integral + increment;
    let mut u_command = base + gains.ki * integral;
    let push = gains.ki * increment;
    if (u_command > gains.limits.max && push > 0.0) || (u_command < gains.limits.min && push < 0.0) {
        integral = state.integral;
        u_command = base + gains.ki * integral;
    }
    Ok(PidOutput {
        u_command,
        u_saturated: gains.limits.clamp(u_command),
        state: PidState {
            integral,
            deriv_filtered,
            prev_error: error,
        },
    })
}

/// Stateful wrapper around [`pid_step`].
#[derive(Debug, Clone)]
pub struct Pid {
    gains: PidGains,
    state: PidState,
}

impl Pid {
    pub fn new(gains: PidGains) -> Self {
        Pid {
            gains,
            state: PidState::default(),
        }
    }

    pub fn gains(&self) -> &PidGains {
        &self.gains
    }

    pub fn state(&self) -> &PidState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// Returns `(u_command, u_saturated)`.
    pub fn step(&mut self, error: f64, ts: f64) -> Result<(f64, f64)> {
        let out = pid_step(&self.gains, &self.state, error, ts)?;
        self.state = out.state;
        Ok((out.u_command, out.u_saturated))
    }
}
