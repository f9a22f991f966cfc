use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{max_control, run, Controller, Disturbance, InjectionPoint, Scenario, Signal, SimTrace};
use crate::lti::TransferFunction;
use crate::metrics::{analyze_step, check_requirements, Requirement, StepMetrics, Verdict};
use crate::Result;

/// One controller on one loop (axis and controlled quantity).
#[derive(Debug, Clone, PartialEq)]
pub struct LoopCase {
    pub name: String,
    pub controller_label: String,
    pub plant: TransferFunction,
    pub controller: Controller,
    pub requirement: Requirement,
    pub ts: f64,
    pub duration: f64,
}

impl LoopCase {
    /// Step to the requirement's reference amplitude, from rest at t = 0.
    pub fn tracking_scenario(&self) -> Scenario {
        Scenario::new(
            self.plant.clone(),
            self.controller.clone(),
            Signal::step(self.requirement.reference),
            self.duration,
            self.ts,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingRow {
    pub name: String,
    pub controller: String,
    pub metrics: Option<StepMetrics>,
    pub verdict: Option<Verdict>,
    pub max_control: f64,
    pub saturation_fraction: f64,
    pub clipped_below: usize,
    pub diverged: bool,
    /// Last-5% mean of the saturated command.
    pub steady_control: f64,
    /// The tail of the run is at rest and away from the actuator limits.
    pub equilibrium_unsaturated: bool,
}

fn tail_mean(v: &[f64]) -> f64 {
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    let tail = (n / 20).max(1);
    v[n - tail..].iter().sum::<f64>() / tail as f64
}

fn tail_unsaturated(tr: &SimTrace) -> bool {
    let n = tr.len();
    if n == 0 {
        return false;
    }
    let tail = (n / 20).max(1);
    (n - tail..n).all(|k| tr.u[k] == tr.u_sat[k])
}

fn tracking_row(case: &LoopCase, band_pct: f64) -> Result<(TrackingRow, SimTrace)> {
    let tr = run(&case.tracking_scenario())?;
    let metrics = if tr.diverged || tr.is_empty() {
        None
    } else {
        Some(analyze_step(&tr, band_pct)?)
    };
    let verdict = metrics.as_ref().map(|m| check_requirements(m, &case.requirement));
    let row = TrackingRow {
        name: case.name.clone(),
        controller: case.controller_label.clone(),
        metrics,
        verdict,
        max_control: max_control(&tr),
        saturation_fraction: tr.saturation_fraction,
        clipped_below: tr.clipped_below(),
        diverged: tr.diverged,
        steady_control: tail_mean(&tr.u_sat),
        equilibrium_unsaturated: !tr.diverged && tail_unsaturated(&tr),
    };
    Ok((row, tr))
}

/// Step-tracking run for every case, in input order.
pub fn run_tracking_suite(cases: &[LoopCase], band_pct: f64) -> Result<Vec<TrackingRow>> {
    cases
        .par_iter()
        .map(|c| tracking_row(c, band_pct).map(|(row, _)| row))
        .collect()
}

/// Disturbance applied once the tracking response has settled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    /// Step size as a fraction of the steady control value.
    pub fraction: f64,
    /// Absolute step size; overrides `fraction` when set.
    pub magnitude: Option<f64>,
    pub point: InjectionPoint,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        DisturbanceSpec {
            fraction: 0.1,
            magnitude: None,
            point: InjectionPoint::Input,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisturbanceRow {
    pub name: String,
    pub controller: String,
    pub onset: f64,
    pub magnitude: f64,
    /// Time from onset until the output re-enters the settling band for
    /// good; `None` when it is still outside at the end of the run.
    pub recovery_time: Option<f64>,
    /// Largest `|y - r|` after onset, percent of the reference.
    pub peak_deviation_pct: f64,
    pub final_error: f64,
    pub diverged: bool,
    /// Why the row was not run (tracking did not settle or diverged).
    pub skipped: Option<String>,
}

fn disturbance_row(case: &LoopCase, spec: &DisturbanceSpec, band_pct: f64) -> Result<DisturbanceRow> {
    let (row, tracking) = tracking_row(case, band_pct)?;
    let mut out = DisturbanceRow {
        name: case.name.clone(),
        controller: case.controller_label.clone(),
        onset: 0.0,
        magnitude: 0.0,
        recovery_time: None,
        peak_deviation_pct: 0.0,
        final_error: 0.0,
        diverged: row.diverged,
        skipped: None,
    };
    let tss = match row.metrics {
        Some(StepMetrics { tss: Some(tss), .. }) if !row.diverged => tss,
        _ => {
            out.skipped = Some("tracking response did not settle".into());
            return Ok(out);
        }
    };
    let ts = case.ts;
    let onset = ((2.0 * tss).max(10.0 * ts) / ts).ceil() * ts;
    let magnitude = match spec.magnitude {
        Some(m) => m,
        None => {
            // Type-1 plants rest at zero command; fall back to the peak
            // command magnitude of the tracking transient.
            let span = case.controller.limits().span();
            let base = if row.steady_control.abs() > 1e-9 * span {
                row.steady_control.abs()
            } else {
                tracking.u_sat.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            };
            spec.fraction * base
        }
    };
    out.onset = onset;
    out.magnitude = magnitude;

    let sc = case.tracking_scenario();
    let sc = Scenario {
        duration: onset + case.duration,
        ..sc
    }
    .with_disturbance(Disturbance {
        signal: Signal::Step {
            amplitude: magnitude,
            start: onset,
        },
        point: spec.point,
    });
    let tr = run(&sc)?;
    out.diverged = tr.diverged;
    if tr.diverged {
        return Ok(out);
    }
    let r = case.requirement.reference;
    let k0 = tr.t.iter().position(|&t| t + 1e-9 * ts >= onset).unwrap_or(tr.len());
    let band = band_pct / 100.0 * r.abs();
    out.peak_deviation_pct = 100.0
        * tr.y[k0..]
            .iter()
            .fold(0.0_f64, |m, &y| m.max((y - r).abs()))
        / r.abs();
    out.final_error = (r - tail_mean(&tr.y)).abs();
    let n = tr.len();
    out.recovery_time = match (k0..n).rev().find(|&k| (tr.y[k] - r).abs() > band) {
        None => Some(0.0),
        Some(k) if k == n - 1 => None,
        Some(k) => Some(tr.t[k] - onset),
    };
    Ok(out)
}

/// Disturbance-rejection run for every case, in input order. Each case is
/// first run as a tracking test to find its settling time; the disturbance
/// starts at twice that time.
pub fn run_disturbance_suite(
    cases: &[LoopCase],
    spec: &DisturbanceSpec,
    band_pct: f64,
) -> Result<Vec<DisturbanceRow>> {
    cases
        .par_iter()
        .map(|c| disturbance_row(c, spec, band_pct))
        .collect()
}
