//! Closed-loop simulation harness: the plant is ZOH-discretized at the
//! controller period and driven by the saturated command.

mod suite;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{pid_step, sf_step, Limits, PidGains, PidState, StateFeedbackGains};
use crate::lti::TransferFunction;
use crate::{Error, Result};

pub use suite::{
    run_disturbance_suite, run_tracking_suite, DisturbanceRow, DisturbanceSpec, LoopCase, TrackingRow,
};

/// Signals beyond this magnitude count as a numerical blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Upper bound on `duration / ts`.
pub const MAX_STEPS: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Controller {
    Pid(PidGains),
    StateFeedback { gains: StateFeedbackGains, limits: Limits },
}

impl Controller {
    pub fn limits(&self) -> Limits {
        match self {
            Controller::Pid(g) => g.limits,
            Controller::StateFeedback { limits, .. } => *limits,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Controller::Pid(_) => "pid",
            Controller::StateFeedback { .. } => "sf",
        }
    }

    pub fn has_integral_action(&self) -> bool {
        match self {
            Controller::Pid(g) => g.ki != 0.0,
            Controller::StateFeedback { gains, .. } => gains.k2 != 0.0,
        }
    }
}

/// Reference or disturbance waveform, zero before `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Signal {
    Step { amplitude: f64, start: f64 },
    Ramp { rate: f64, start: f64 },
}

impl Signal {
    pub fn step(amplitude: f64) -> Self {
        Signal::Step { amplitude, start: 0.0 }
    }

    pub fn zero() -> Self {
        Signal::step(0.0)
    }

    pub fn start(&self) -> f64 {
        match *self {
            Signal::Step { start, .. } | Signal::Ramp { start, .. } => start,
        }
    }

    /// Value at sample time `t`; `slack` absorbs rounding of `k * ts`.
    fn value(&self, t: f64, slack: f64) -> f64 {
        match *self {
            Signal::Step { amplitude, start } => {
                if t + slack >= start {
                    amplitude
                } else {
                    0.0
                }
            }
            Signal::Ramp { rate, start } => {
                if t + slack >= start {
                    rate * (t - start).max(0.0)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InjectionPoint {
    /// Added to the saturated command at the plant input.
    #[default]
    Input,
    /// Added to the measured output.
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub signal: Signal,
    #[serde(default)]
    pub point: InjectionPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: TransferFunction,
    pub controller: Controller,
    pub reference: Signal,
    pub disturbance: Option<Disturbance>,
    pub duration: f64,
    pub ts: f64,
    /// Apply each command one sample late.
    pub loop_delay: bool,
}

impl Scenario {
    pub fn new(plant: TransferFunction, controller: Controller, reference: Signal, duration: f64, ts: f64) -> Self {
        Scenario {
            plant,
            controller,
            reference,
            disturbance: None,
            duration,
            ts,
            loop_delay: false,
        }
    }

    pub fn with_disturbance(mut self, d: Disturbance) -> Self {
        self.disturbance = Some(d);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::invalid("scenario ts must be positive"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("scenario duration must be positive"));
        }
        if self.duration / self.ts > MAX_STEPS {
            return Err(Error::invalid(format!(
                "duration / ts = {:.3e} exceeds the {MAX_STEPS:e} step guard",
                self.duration / self.ts
            )));
        }
        let mut starts = vec![("reference", self.reference.start())];
        if let Some(d) = &self.disturbance {
            starts.push(("disturbance", d.signal.start()));
        }
        for (name, s) in starts {
            if !(0.0..=self.duration).contains(&s) {
                return Err(Error::invalid(format!(
                    "{name} start {s} s lies outside [0, {}]",
                    self.duration
                )));
            }
        }
        if !self.plant.is_strictly_proper() {
            return Err(Error::invalid(
                "closed-loop simulation needs a strictly proper plant (no algebraic loop)",
            ));
        }
        if let Controller::StateFeedback { gains, limits } = &self.controller {
            limits.validate()?;
            if gains.k1.len() != self.plant.order() {
                return Err(Error::Dimension(format!(
                    "state-feedback gain has {} entries, plant has {} states",
                    gains.k1.len(),
                    self.plant.order()
                )));
            }
        }
        if let Controller::Pid(g) = &self.controller {
            g.validate()?;
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration / self.ts + 1e-9).floor() as usize + 1
    }
}

/// Full closed-loop time history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub u_sat: Vec<f64>,
    pub y: Vec<f64>,
    /// Plant state at each sample, phase-variable coordinates.
    pub x: Vec<Vec<f64>>,
    pub saturation_fraction: f64,
    /// The run stopped early because a signal blew up.
    pub diverged: bool,
    pub limits: Option<Limits>,
}

pub const TRACE_HEADER: [&str; 6] = ["t", "r", "e", "u", "u_sat", "y"];

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Samples where the controller asked for less than the lower limit.
    pub fn clipped_below(&self) -> usize {
        match self.limits {
            Some(l) => self.u.iter().filter(|&&u| u < l.min).count(),
            None => 0,
        }
    }

    fn finish(&mut self) {
        let n = self.u.len();
        let sat = self.u.iter().zip(&self.u_sat).filter(|(a, b)| a != b).count();
        self.saturation_fraction = if n == 0 { 0.0 } else { sat as f64 / n as f64 };
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::invalid(format!("trace export failed: {e}"));
        wr.write_record(TRACE_HEADER).map_err(io)?;
        for k in 0..self.len() {
            wr.write_record([
                self.t[k].to_string(),
                self.r[k].to_string(),
                self.e[k].to_string(),
                self.u[k].to_string(),
                self.u_sat[k].to_string(),
                self.y[k].to_string(),
            ])
            .map_err(io)?;
        }
        wr.flush().map_err(|e| Error::invalid(format!("trace export failed: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    /// Reads a trace exported by [`SimTrace::write_csv`]. States are not
    /// part of the format and come back empty.
    pub fn read_csv<R: Read>(rdr: R, source: &str) -> Result<SimTrace> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(rdr);
        let headers = rd.headers().map_err(|e| Error::Dataset {
            path: source.into(),
            line: 1,
            message: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
            return Err(Error::Dataset {
                path: source.into(),
                line: 1,
                message: format!("expected header {}", TRACE_HEADER.join(",")),
            });
        }
        let mut tr = SimTrace::default();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Dataset {
                path: source.into(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let mut vals = [0.0; 6];
            for (i, v) in vals.iter_mut().enumerate() {
                *v = rec
                    .get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Dataset {
                        path: source.into(),
                        line,
                        message: format!("column {} is not a finite number", TRACE_HEADER[i]),
                    })?;
            }
            tr.t.push(vals[0]);
            tr.r.push(vals[1]);
            tr.e.push(vals[2]);
            tr.u.push(vals[3]);
            tr.u_sat.push(vals[4]);
            tr.y.push(vals[5]);
        }
        tr.finish();
        Ok(tr)
    }
}

/// Largest saturated command in the trace, Hz.
pub fn max_control(trace: &SimTrace) -> f64 {
    if trace.u_sat.is_empty() {
        return 0.0;
    }
    trace.u_sat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Sampled loop with the actuator limits removed: `z+ = M z + g r`.
///
/// `z` is the plant state followed by the controller memory, which is
/// `(integral, filtered derivative, previous error)` for PID and the
/// integral state for state feedback.
pub fn linear_loop(plant: &TransferFunction, controller: &Controller, ts: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !plant.is_strictly_proper() {
        return Err(Error::invalid("loop analysis needs a strictly proper plant"));
    }
    let d = plant.to_state_space().discretize_zoh(ts)?;
    let n = d.n_states();
    let (ad, bd, c) = (d.ad(), d.bd(), d.c());
    // Each row is (coefficients on z, coefficient on r).
    let mut rows: Vec<(DMatrix<f64>, f64)> = Vec::new();
    let (m, urow, ur) = match controller {
        Controller::Pid(g) => {
            let m = n + 3;
            let mut irow = DMatrix::zeros(1, m);
            let mut drow = DMatrix::zeros(1, m);
            let mut erow = DMatrix::zeros(1, m);
            for j in 0..n {
                erow[(0, j)] = -c[(0, j)];
                irow[(0, j)] = -0.5 * ts * c[(0, j)];
            }
            irow[(0, n)] = 1.0;
            irow[(0, n + 2)] = 0.5 * ts;
            let (mut ir, mut dr) = (0.5 * ts, 0.0);
            if g.ki == 0.0 {
                // The accumulator feeds nothing; keep it from showing up as
                // a spurious unit eigenvalue.
                irow.fill(0.0);
                ir = 0.0;
            }
            if g.kd != 0.0 {
                let q = 1.0 / (1.0 + g.deriv_filter_n * ts);
                for j in 0..n {
                    drow[(0, j)] = -g.deriv_filter_n * q * c[(0, j)];
                }
                drow[(0, n + 1)] = q;
                drow[(0, n + 2)] = -g.deriv_filter_n * q;
                dr = g.deriv_filter_n * q;
            }
            let urow = &erow * g.kp + &irow * g.ki + &drow * g.kd;
            let ur = g.kp + g.ki * ir + g.kd * dr;
            rows.push((irow, ir));
            rows.push((drow, dr));
            rows.push((erow, 1.0));
            (m, urow, ur)
        }
        Controller::StateFeedback { gains, .. } => {
            if gains.k1.len() != n {
                return Err(Error::Dimension(format!(
                    "state-feedback gain has {} entries, plant has {n} states",
                    gains.k1.len()
                )));
            }
            let m = n + 1;
            let mut urow = DMatrix::zeros(1, m);
            let mut xirow = DMatrix::zeros(1, m);
            for j in 0..n {
                urow[(0, j)] = -gains.k1[j] - gains.k2 * ts * c[(0, j)];
                xirow[(0, j)] = -ts * c[(0, j)];
            }
            urow[(0, n)] = gains.k2;
            xirow[(0, n)] = 1.0;
            rows.push((xirow, ts));
            (m, urow, gains.k2 * ts)
        }
    };
    let mut out = DMatrix::zeros(m, m);
    let mut g = DVector::zeros(m);
    out.view_mut((0, 0), (n, n)).copy_from(ad);
    let fb = bd * &urow;
    for i in 0..n {
        for j in 0..m {
            out[(i, j)] += fb[(i, j)];
        }
    }
    for i in 0..n {
        g[i] = bd[(i, 0)] * ur;
    }
    for (k, (row, r)) in rows.into_iter().enumerate() {
        out.row_mut(n + k).copy_from(&row.row(0));
        g[n + k] = r;
    }
    Ok((out, g))
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// The unsaturated sampled loop is asymptotically stable.
pub fn is_loop_stable(plant: &TransferFunction, controller: &Controller, ts: f64) -> Result<bool> {
    Ok(spectral_radius(&linear_loop(plant, controller, ts)?.0) < 1.0)
}

enum ControllerState {
    Pid(PidState),
    Sf(f64),
}

/// Runs a scenario. Identical scenarios give bit-identical traces.
pub fn run(scenario: &Scenario) -> Result<SimTrace> {
    scenario.validate()?;
    let ts = scenario.ts;
    let plant = scenario.plant.to_state_space().discretize_zoh(ts)?;
    let n = plant.n_states();
    let samples = scenario.n_samples();
    let slack = 1e-9 * ts;

    let mut tr = SimTrace {
        t: Vec::with_capacity(samples),
        r: Vec::with_capacity(samples),
        e: Vec::with_capacity(samples),
        u: Vec::with_capacity(samples),
        u_sat: Vec::with_capacity(samples),
        y: Vec::with_capacity(samples),
        x: Vec::with_capacity(samples),
        limits: Some(scenario.controller.limits()),
        ..Default::default()
    };
    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut cstate = match scenario.controller {
        Controller::Pid(_) => ControllerState::Pid(PidState::default()),
        Controller::StateFeedback { .. } => ControllerState::Sf(0.0),
    };
    let mut held = 0.0;

    for k in 0..samples {
        let t = k as f64 * ts;
        let r = scenario.reference.value(t, slack);
        let (d_in, d_out) = match &scenario.disturbance {
            Some(d) => {
                let v = d.signal.value(t, slack);
                match d.point {
                    InjectionPoint::Input => (v, 0.0),
                    InjectionPoint::Output => (0.0, v),
                }
            }
            None => (0.0, 0.0),
        };
        let y = plant.output(&x, 0.0) + d_out;
        if !y.is_finite() || y.abs() > DIVERGENCE_LIMIT || x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            tr.diverged = true;
            break;
        }
        let e = r - y;
        let (u_cmd, u_sat) = match (&scenario.controller, &mut cstate) {
            (Controller::Pid(g), ControllerState::Pid(s)) => {
                let out = pid_step(g, s, e, ts)?;
                *s = out.state;
                (out.u_command, out.u_saturated)
            }
            (Controller::StateFeedback { gains, limits }, ControllerState::Sf(xi)) => {
                let out = sf_step(gains, &x, *xi, r, y, ts, limits)?;
                *xi = out.xi;
                (out.u_command, out.u_saturated)
            }
            _ => unreachable!("controller state matches controller kind"),
        };
        if !u_cmd.is_finite() {
            tr.diverged = true;
            break;
        }
        let applied = if scenario.loop_delay {
            std::mem::replace(&mut held, u_sat)
        } else {
            u_sat
        };

        tr.t.push(t);
        tr.r.push(r);
        tr.e.push(e);
        tr.u.push(u_cmd);
        tr.u_sat.push(u_sat);
        tr.y.push(y);
        tr.x.push(x.clone());

        plant.advance(&x, applied + d_in, &mut next);
        std::mem::swap(&mut x, &mut next);
    }
    tr.finish();
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::TransferFunction;

    fn asc_velocity() -> TransferFunction {
        TransferFunction::new(vec![0.09809], vec![1.0, 52.0, 1566.5]).unwrap()
    }

    fn unit_gain() -> Controller {
        Controller::Pid(PidGains::proportional(1.0, Limits::new(-1e9, 1e9).unwrap()).unwrap())
    }

    #[test]
    fn linear_loop_reproduces_simulation() {
        let plant = asc_velocity();
        let wide = Limits::new(-1e12, 1e12).unwrap();
        let ctrls = [
            Controller::Pid(PidGains::new(500.0, 20000.0, 3.0, 100.0, wide).unwrap()),
            Controller::StateFeedback {
                gains: StateFeedbackGains::new(vec![300.0, 4.0], 50000.0).unwrap(),
                limits: wide,
            },
        ];
        for c in ctrls {
            let tr = run(&Scenario::new(plant.clone(), c.clone(), Signal::step(1.0), 0.5, 0.01)).unwrap();
            let (m, g) = linear_loop(&plant, &c, 0.01).unwrap();
            let n = tr.x[0].len();
            let mut z: DVector<f64> = DVector::zeros(m.nrows());
            for k in 0..tr.len() {
                for j in 0..n {
                    assert!((z[j] - tr.x[k][j]).abs() <= 1e-9 * (1.0 + tr.x[k][j].abs()), "{} k={k}", c.kind());
                }
                z = &m * &z + &g;
            }
            assert!(spectral_radius(&m) < 1.0);
        }
    }

    #[test]
    fn loop_stability_flags_unstable_gain() {
        let plant = asc_velocity();
        let wide = Limits::new(-1e12, 1e12).unwrap();
        let c = Controller::Pid(PidGains::proportional(-1e6, wide).unwrap());
        assert!(!is_loop_stable(&plant, &c, 0.01).unwrap());
        assert!(is_loop_stable(&plant, &unit_gain(), 0.01).unwrap());
    }

    #[test]
    fn rest_stays_at_rest() {
        let sc = Scenario::new(asc_velocity(), unit_gain(), Signal::zero(), 1.0, 0.01);
        let tr = run(&sc).unwrap();
        assert_eq!(tr.len(), 101);
        assert!(tr.y.iter().chain(&tr.u).chain(&tr.e).all(|&v| v == 0.0));
        assert_eq!(tr.saturation_fraction, 0.0);
        assert_eq!(max_control(&tr), 0.0);
    }

    #[test]
    fn velocity_unit_feedback_keeps_error() {
        let sc = Scenario::new(asc_velocity(), unit_gain(), Signal::step(1.0), 2.0, 0.01);
        let tr = run(&sc).unwrap();
        let g = 0.09809 / 1566.5;
        let want = 1.0 / (1.0 + g);
        let e_end = *tr.e.last().unwrap();
        assert!(((e_end - want) / want).abs() < 1e-9);
    }

    #[test]
    fn validation_errors() {
        let mut sc = Scenario::new(asc_velocity(), unit_gain(), Signal::step(1.0), 1.0, 0.0);
        assert!(run(&sc).is_err());
        sc.ts = 1e-8;
        assert!(run(&sc).is_err());
        sc.ts = 0.01;
        sc.reference = Signal::Step { amplitude: 1.0, start: 2.0 };
        assert!(run(&sc).is_err());
        sc.reference = Signal::step(1.0);
        sc.controller = Controller::StateFeedback {
            gains: StateFeedbackGains::new(vec![1.0], 1.0).unwrap(),
            limits: Limits::pwm(),
        };
        assert!(matches!(run(&sc), Err(Error::Dimension(_))));
        let proper = TransferFunction::new(vec![1.0, 1.0], vec![1.0, 2.0]).unwrap();
        let sc = Scenario::new(proper, unit_gain(), Signal::step(1.0), 1.0, 0.01);
        assert!(run(&sc).is_err());
    }

    #[test]
    fn divergence_truncates_and_flags() {
        let unstable = TransferFunction::new(vec![1.0], vec![1.0, -50.0]).unwrap();
        let sc = Scenario::new(unstable, unit_gain(), Signal::step(1.0), 100.0, 0.01);
        let tr = run(&sc).unwrap();
        assert!(tr.diverged);
        assert!(tr.len() < 10_001);
        assert!(tr.y.iter().all(|v| v.abs() <= DIVERGENCE_LIMIT));
    }

    #[test]
    fn ramp_reference_and_delay() {
        let mut sc = Scenario::new(
            asc_velocity(),
            unit_gain(),
            Signal::Ramp { rate: 2.0, start: 0.5 },
            1.0,
            0.01,
        );
        let tr = run(&sc).unwrap();
        assert_eq!(tr.r[50], 0.0);
        assert!((tr.r[100] - 1.0).abs() < 1e-12);
        sc.loop_delay = true;
        let delayed = run(&sc).unwrap();
        assert_ne!(tr.y, delayed.y);
    }

    #[test]
    fn output_disturbance_shifts_measurement() {
        let sc = Scenario::new(asc_velocity(), unit_gain(), Signal::zero(), 1.0, 0.01).with_disturbance(
            Disturbance {
                signal: Signal::Step { amplitude: 3.0, start: 0.5 },
                point: InjectionPoint::Output,
            },
        );
        let tr = run(&sc).unwrap();
        assert_eq!(tr.y[49], 0.0);
        assert!((tr.y[50] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let sc = Scenario::new(asc_velocity(), unit_gain(), Signal::step(1.0), 0.2, 0.01);
        let tr = run(&sc).unwrap();
        let s = tr.to_csv_string();
        assert!(s.starts_with("t,r,e,u,u_sat,y\n"));
        let back = SimTrace::read_csv(s.as_bytes(), "mem").unwrap();
        assert_eq!(back.y, tr.y);
        assert_eq!(back.u_sat, tr.u_sat);
        assert!(SimTrace::read_csv("a,b\n1,2\n".as_bytes(), "mem").is_err());
        let bad = SimTrace::read_csv("t,r,e,u,u_sat,y\n0,1,1,x,1,0\n".as_bytes(), "mem");
        assert!(matches!(bad, Err(Error::Dataset { line: 2, .. })), "{bad:?}");
    }
}
