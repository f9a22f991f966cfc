//! Black-box identification of second-order velocity dynamics
//! `b0 / (s^2 + a1 s + a0)` from PWM-frequency / velocity logs.
//!
//! Models are fitted on simulation error: the candidate is ZOH-discretized at
//! the data period and simulated from rest against the logged input, and
//! the squared output mismatch is minimized with Levenberg-Marquardt.
//! Position models are never fitted directly; they come from
//! [`integrator_augment`].

mod dataset;
mod lm;

use serde::Serialize;

use crate::lti::TransferFunction;
use crate::metrics::constants::MIN_IDENTIFICATION_HZ;
use crate::{Error, Result};

pub use dataset::{DataSet, DatasetFormat, MIN_SAMPLES};

/// Free parameters of the second-order structure.
pub const SECOND_ORDER_PARAMS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitMetrics {
    /// Normalized fit, percent; 100 is a perfect match.
    pub fit_pct: f64,
    /// Final prediction error.
    pub fpe: f64,
    pub mse: f64,
}

/// Fit percentage, FPE and MSE of a model output against measurements.
pub fn fit_metrics(y: &[f64], yhat: &[f64], n_params: usize) -> Result<FitMetrics> {
    let n = y.len();
    if n == 0 || yhat.len() != n {
        return Err(Error::Dimension(format!(
            "measured and model sequences must have equal non-zero length ({} vs {})",
            n,
            yhat.len()
        )));
    }
    if n_params >= n {
        return Err(Error::invalid(format!(
            "{n_params} parameters need more than {n} samples"
        )));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let spread = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if spread == 0.0 || spread <= 1e-12 * scale * (n as f64).sqrt() {
        return Err(Error::ConstantOutput);
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    let mse = sse / n as f64;
    let ratio = n_params as f64 / n as f64;
    Ok(FitMetrics {
        fit_pct: 100.0 * (1.0 - sse.sqrt() / spread),
        fpe: mse * (1.0 + ratio) / (1.0 - ratio),
        mse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub label: String,
    pub fit_pct: f64,
    pub fpe: f64,
    pub mse: f64,
    pub model: TransferFunction,
    pub converged: bool,
    pub iterations: usize,
    /// The fitted model has no poles in the closed right half-plane.
    pub stable: bool,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn metrics(&self) -> FitMetrics {
        FitMetrics {
            fit_pct: self.fit_pct,
            fpe: self.fpe,
            mse: self.mse,
        }
    }
}

fn model_of(p: &[f64]) -> Result<TransferFunction> {
    TransferFunction::new(vec![p[0]], vec![1.0, p[1], p[2]])
}

/// Simulated response of `b0 / (s^2 + a1 s + a0)` to `u`, from rest.
pub fn simulate_second_order(params: &[f64; 3], u: &[f64], ts: f64) -> Result<Vec<f64>> {
    let dss = model_of(params)?.to_state_space().discretize_zoh(ts)?;
    Ok(dss.simulate_output(u))
}

fn residuals(p: &[f64], ds: &DataSet, ts: f64) -> Vec<f64> {
    let sim = model_of(p)
        .and_then(|tf| tf.to_state_space().discretize_zoh(ts))
        .map(|d| d.simulate_output(&ds.u));
    match sim {
        Ok(yhat) => yhat.iter().zip(&ds.y).map(|(a, b)| a - b).collect(),
        Err(_) => vec![f64::NAN; ds.len()],
    }
}

fn tail_mean(v: &[f64]) -> f64 {
    let tail = (v.len() / 10).max(1);
    v[v.len() - tail..].iter().sum::<f64>() / tail as f64
}

/// Deterministic multistart seeds `(b0, a1, a0)`.
///
/// Steady gain comes from the tail means of output and input; the natural
/// frequency from the time to 63% of the final output. Damping spans
/// 0.2 to 0.7 with the midpoint 0.45 also tried at half and double the
/// frequency estimate.
fn seeds(ds: &DataSet) -> Vec<[f64; 3]> {
    let ts = ds.ts();
    let y_ss = tail_mean(&ds.y);
    let u_lvl = tail_mean(&ds.u);
    let umax = ds.u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let gain = if u_lvl.abs() > 1e-9 * umax.max(1e-300) {
        y_ss / u_lvl
    } else {
        let num: f64 = ds.u.iter().zip(&ds.y).map(|(u, y)| u * y).sum();
        let den: f64 = ds.u.iter().map(|u| u * u).sum();
        if den > 0.0 {
            num / den
        } else {
            1.0
        }
    };
    let k_start = ds.u.iter().position(|v| v.abs() > 0.5 * umax).unwrap_or(0);
    let t63 = (k_start..ds.len())
        .find(|&k| ds.y[k].abs() >= 0.632 * y_ss.abs())
        .map(|k| ds.t[k] - ds.t[k_start])
        .unwrap_or(ds.t[ds.len() - 1] - ds.t[0]);
    let wn0 = 1.5 / t63.max(ts);

    [(0.45, 1.0), (0.2, 1.0), (0.7, 1.0), (0.45, 0.5), (0.45, 2.0)]
        .iter()
        .map(|&(zeta, f)| {
            let wn = wn0 * f;
            let a0 = wn * wn;
            [gain * a0, 2.0 * zeta * wn, a0]
        })
        .collect()
}

/// Fits `b0 / (s^2 + a1 s + a0)` to a dataset by simulation-error
/// Levenberg-Marquardt and scores the winner.
///
/// An unstable fitted model is kept and flagged; a run whose cost never
/// becomes finite reports `converged = false` with its best point.
pub fn fit_second_order(ds: &DataSet, initial_guess: Option<&TransferFunction>) -> Result<FitReport> {
    // Fails early on constant output, where the fit percentage is undefined.
    let ts = ds.ts();
    fit_metrics(&ds.y, &ds.y, SECOND_ORDER_PARAMS)?;

    let mut starts = Vec::new();
    if let Some(g) = initial_guess {
        if g.order() != 2 || g.num().len() != 1 {
            return Err(Error::invalid("initial guess must have the structure b0 / (s^2 + a1 s + a0)"));
        }
        starts.push([g.num()[0], g.den()[1], g.den()[2]]);
    }
    starts.extend(seeds(ds));

    let opts = lm::LmOptions::default();
    let mut best: Option<lm::LmResult> = None;
    for s in &starts {
        let res = lm::minimize(|p| residuals(p, ds, ts), s, &opts);
        let better = match &best {
            None => true,
            Some(b) => res.cost.is_finite() && (!b.cost.is_finite() || res.cost < b.cost),
        };
        if better {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");

    let model = model_of(&best.params)?;
    let yhat: Vec<f64> = residuals(&best.params, ds, ts)
        .iter()
        .zip(&ds.y)
        .map(|(r, y)| r + y)
        .collect();
    let m = fit_metrics(&ds.y, &yhat, SECOND_ORDER_PARAMS)?;

    let mut warnings = Vec::new();
    let level = ds.u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if level < MIN_IDENTIFICATION_HZ {
        warnings.push(format!(
            "input level {level:.0} Hz is below {MIN_IDENTIFICATION_HZ:.0} Hz; low-velocity data is noise dominated"
        ));
    }
    let stable = model.is_bibo_stable();
    if !stable {
        warnings.push("fitted model is not BIBO-stable".into());
    }
    Ok(FitReport {
        label: ds.label.clone(),
        fit_pct: m.fit_pct,
        fpe: m.fpe,
        mse: m.mse,
        model,
        converged: best.converged && best.cost.is_finite(),
        iterations: best.iterations,
        stable,
        warnings,
    })
}

/// Index of the report with the highest fit percentage; ties go to the
/// lower FPE, then the lower MSE, then the earlier entry.
pub fn select_best(reports: &[FitReport]) -> Option<usize> {
    select_best_metrics(&reports.iter().map(FitReport::metrics).collect::<Vec<_>>())
}

pub fn select_best_metrics(metrics: &[FitMetrics]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, m) in metrics.iter().enumerate() {
        let replace = match best {
            None => true,
            Some(b) => {
                let cur = &metrics[b];
                m.fit_pct
                    .total_cmp(&cur.fit_pct)
                    .reverse()
                    .then(m.fpe.total_cmp(&cur.fpe))
                    .then(m.mse.total_cmp(&cur.mse))
                    .is_lt()
            }
        };
        if replace {
            best = Some(i);
        }
    }
    best
}

/// Position model from a velocity model: the denominator gains a factor `s`.
pub fn integrator_augment(velocity_model: &TransferFunction) -> TransferFunction {
    velocity_model.with_integrator()
}
