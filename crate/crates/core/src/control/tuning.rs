//! Deterministic PID search: a logarithmic grid around a plant-derived gain
//! scale, then pattern-search refinement in log space.

use super::{Limits, PidGains, DEFAULT_DERIV_FILTER_N};
use crate::lti::TransferFunction;
use crate::metrics::{analyze_step, check_requirements, Requirement};
use crate::simloop::{run, Controller, Scenario, Signal};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TuningProblem {
    pub requirement: Requirement,
    pub limits: Limits,
    pub ts: f64,
    /// Simulation horizon; defaults to ten times the settling bound.
    pub duration: Option<f64>,
    pub band_pct: f64,
    pub deriv_filter_n: f64,
    pub allow_integral: bool,
    pub allow_derivative: bool,
}

impl TuningProblem {
    pub fn new(requirement: Requirement, limits: Limits) -> Self {
        TuningProblem {
            requirement,
            limits,
            ts: crate::lti::DEFAULT_TS,
            duration: None,
            band_pct: crate::metrics::constants::DEFAULT_BAND_PCT,
            deriv_filter_n: DEFAULT_DERIV_FILTER_N,
            allow_integral: true,
            allow_derivative: true,
        }
    }

    fn horizon(&self) -> f64 {
        self.duration.unwrap_or(10.0 * self.requirement.tss_max)
    }
}

/// Gains in log10 space relative to the plant scale.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    p: f64,
    i: Option<f64>,
    d: Option<f64>,
}

struct Search<'a> {
    plant: &'a TransferFunction,
    problem: &'a TuningProblem,
    gain_scale: f64,
    omega: f64,
}

impl Search<'_> {
    fn gains(&self, pt: Point) -> Result<PidGains> {
        let kp = self.gain_scale * 10f64.powf(pt.p);
        let ki = pt.i.map_or(0.0, |q| kp * self.omega * 10f64.powf(q));
        let kd = pt.d.map_or(0.0, |q| kp / self.omega * 10f64.powf(q));
        PidGains::new(kp, ki, kd, self.problem.deriv_filter_n, self.problem.limits)
    }

    /// Below 1 means every requirement holds; the value is the worst ratio
    /// of achieved metric to its bound. Failing candidates score above 1,
    /// ordered by how badly they miss.
    fn score(&self, pt: Point) -> Result<f64> {
        let req = &self.problem.requirement;
        let gains = self.gains(pt)?;
        let sc = Scenario::new(
            self.plant.clone(),
            Controller::Pid(gains),
            Signal::step(req.reference),
            self.problem.horizon(),
            self.problem.ts,
        );
        let tr = run(&sc)?;
        if tr.diverged {
            return Ok(1e6);
        }
        let m = analyze_step(&tr, self.problem.band_pct)?;
        let v = check_requirements(&m, req);
        let tss_ratio = m.tss.map_or(10.0, |t| t / req.tss_max.max(1e-12));
        let os_ratio = if req.os_max > 0.0 {
            m.os_pct / req.os_max
        } else if m.os_pct > 0.0 {
            1.0 + m.os_pct
        } else {
            0.0
        };
        let ess_bound = req.ess_max + crate::metrics::ESS_REL_TOL * req.reference.abs();
        let ess_ratio = m.ess / ess_bound;
        if v.pass {
            return Ok(0.999 * tss_ratio.max(os_ratio));
        }
        let miss = (tss_ratio - 1.0).max(0.0)
            + (os_ratio - 1.0).max(0.0)
            + (ess_ratio.max(1.0)).log10()
            + if m.settled { 0.0 } else { 5.0 };
        Ok(1.0 + miss)
    }
}

/// Searches for PID gains whose simulated step response passes the
/// requirement. Returns [`Error::NoSolution`] when neither the grid nor the
/// refinement finds a passing design.
pub fn tune_pid(plant: &TransferFunction, problem: &TuningProblem) -> Result<PidGains> {
    problem.requirement.validate()?;
    problem.limits.validate()?;
    if !(plant.is_bibo_stable() || plant.system_type() == 1) {
        return Err(Error::invalid("PID tuning needs a BIBO-stable or type-1 plant"));
    }
    // Target bandwidth from the settling bound; the plant magnitude there
    // sets the proportional gain scale.
    let omega = 4.0 / problem.requirement.tss_max;
    let mag = plant.eval_jw(omega).norm();
    if !(mag > 0.0 && mag.is_finite()) {
        return Err(Error::Degenerate("plant gain vanishes at the target bandwidth".into()));
    }
    let search = Search {
        plant,
        problem,
        gain_scale: 1.0 / mag,
        omega,
    };

    let p_grid: Vec<f64> = (0..7).map(|k| -1.5 + 0.5 * k as f64).collect();
    let i_grid: Vec<Option<f64>> = if problem.allow_integral {
        (0..6).map(|k| Some(-2.0 + 0.5 * k as f64)).collect()
    } else {
        vec![None]
    };
    let d_grid: Vec<Option<f64>> = if problem.allow_derivative {
        std::iter::once(None)
            .chain((0..4).map(|k| Some(-2.0 + 0.5 * k as f64)))
            .collect()
    } else {
        vec![None]
    };

    let mut best: Option<(f64, Point)> = None;
    for &p in &p_grid {
        for &i in &i_grid {
            for &d in &d_grid {
                let pt = Point { p, i, d };
                let s = search.score(pt)?;
                if best.map_or(true, |(b, _)| s < b) {
                    best = Some((s, pt));
                }
            }
        }
    }
    let (mut score, mut pt) = best.expect("grid is non-empty");

    let mut step = 0.25;
    while step >= 0.02 {
        let mut improved = false;
        for dim in 0..3 {
            for dir in [-1.0, 1.0] {
                let mut cand = pt;
                match dim {
                    0 => cand.p += dir * step,
                    1 => match cand.i.as_mut() {
                        Some(v) => *v += dir * step,
                        None => continue,
                    },
                    _ => match cand.d.as_mut() {
                        Some(v) => *v += dir * step,
                        None => continue,
                    },
                }
                let s = search.score(cand)?;
                if s < score {
                    score = s;
                    pt = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    if score < 1.0 {
        search.gains(pt)
    } else {
        Err(Error::NoSolution(format!(
            "no PID gains met the requirement (best miss score {score:.3})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_plant() {
        let plant = TransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let req = Requirement::new(1.0, "", 2.0, 10.0, 0.0).unwrap();
        let problem = TuningProblem::new(req.clone(), Limits::new(-1e6, 1e6).unwrap());
        let g = tune_pid(&plant, &problem).unwrap();
        let tr = run(&Scenario::new(plant, Controller::Pid(g), Signal::step(1.0), 20.0, 0.01)).unwrap();
        let m = analyze_step(&tr, 2.0).unwrap();
        assert!(check_requirements(&m, &req).pass, "{m:?}");
    }

    #[test]
    fn zero_ess_impossible_without_integral() {
        let plant = TransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let req = Requirement::new(1.0, "", 2.0, 10.0, 0.0).unwrap();
        let mut problem = TuningProblem::new(req, Limits::new(-1e6, 1e6).unwrap());
        problem.allow_integral = false;
        assert!(matches!(tune_pid(&plant, &problem), Err(Error::NoSolution(_))));
    }

    #[test]
    fn rejects_unstable_plant() {
        let plant = TransferFunction::new(vec![1.0], vec![1.0, -1.0]).unwrap();
        let req = Requirement::new(1.0, "", 2.0, 10.0, 0.0).unwrap();
        let problem = TuningProblem::new(req, Limits::new(-1e6, 1e6).unwrap());
        assert!(tune_pid(&plant, &problem).is_err());
    }
}
