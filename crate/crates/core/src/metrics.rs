//! Step-response metrics and requirement checks.

use serde::{Deserialize, Serialize};

use crate::simloop::SimTrace;
use crate::{Error, Result};

/// Read-only constants of the mount and its control hardware.
pub mod constants {
    /// Apparent sidereal rotation rate the mount must track, degrees/second.
    pub const SIDEREAL_RATE_DEG_S: f64 = 0.004166;
    /// Parking position, declination axis, degrees.
    pub const PARKING_DECLINATION_DEG: f64 = -90.0;
    /// Parking position, ascension axis, degrees.
    pub const PARKING_ASCENSION_DEG: f64 = 0.0;
    /// PWM frequency saturation of the motor drivers, Hz.
    pub const ACTUATOR_MAX_HZ: f64 = 350_000.0;
    /// Controller sampling period, seconds.
    pub const DEFAULT_TS: f64 = crate::lti::DEFAULT_TS;
    /// Input levels below this are too noisy for identification, Hz.
    pub const MIN_IDENTIFICATION_HZ: f64 = 50_000.0;
    /// Default settling band, percent of the final reference.
    pub const DEFAULT_BAND_PCT: f64 = 2.0;

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct NamedConstant {
        pub name: &'static str,
        pub value: f64,
        pub units: &'static str,
    }

    pub const REGISTRY: &[NamedConstant] = &[
        NamedConstant {
            name: "sidereal_rate",
            value: SIDEREAL_RATE_DEG_S,
            units: "deg/s",
        },
        NamedConstant {
            name: "parking_declination",
            value: PARKING_DECLINATION_DEG,
            units: "deg",
        },
        NamedConstant {
            name: "parking_ascension",
            value: PARKING_ASCENSION_DEG,
            units: "deg",
        },
        NamedConstant {
            name: "actuator_max",
            value: ACTUATOR_MAX_HZ,
            units: "Hz",
        },
        NamedConstant {
            name: "default_ts",
            value: DEFAULT_TS,
            units: "s",
        },
    ];

    pub fn lookup(name: &str) -> Option<f64> {
        REGISTRY.iter().find(|c| c.name == name).map(|c| c.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Settling time measured from the step instant; `None` when the output
    /// leaves the band at the last sample.
    pub tss: Option<f64>,
    pub os_pct: f64,
    pub ess: f64,
    pub settled: bool,
}

/// One row of the performance-requirement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub reference: f64,
    #[serde(default)]
    pub units: String,
    pub tss_max: f64,
    pub os_max: f64,
    pub ess_max: f64,
}

impl Requirement {
    pub fn new(reference: f64, units: &str, tss_max: f64, os_max: f64, ess_max: f64) -> Result<Self> {
        let r = Requirement {
            reference,
            units: units.to_string(),
            tss_max,
            os_max,
            ess_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.reference.is_finite() || self.reference == 0.0 {
            return Err(Error::invalid("requirement reference must be finite and nonzero"));
        }
        for (name, v) in [
            ("tss_max", self.tss_max),
            ("os_max", self.os_max),
            ("ess_max", self.ess_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a finite non-negative bound")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub settled: bool,
    pub tss_ok: bool,
    pub os_ok: bool,
    pub ess_ok: bool,
}

/// Relative slack on the steady-state error bound; an exact-zero bound is
/// unattainable in floating point.
pub const ESS_REL_TOL: f64 = 1e-6;

pub fn analyze_step(trace: &SimTrace, band_pct: f64) -> Result<StepMetrics> {
    analyze_step_samples(&trace.t, &trace.r, &trace.y, band_pct)
}

/// Step metrics from raw samples. The step instant is the first sample at
/// which the reference takes its final value.
pub fn analyze_step_samples(t: &[f64], r: &[f64], y: &[f64], band_pct: f64) -> Result<StepMetrics> {
    if t.len() != r.len() || t.len() != y.len() {
        return Err(Error::Dimension("t, r and y must have equal lengths".into()));
    }
    if t.is_empty() {
        return Err(Error::invalid("empty trace"));
    }
    if !(band_pct > 0.0) {
        return Err(Error::invalid("settling band must be positive"));
    }
    let r_final = *r.last().unwrap();
    let k0 = r.iter().position(|&v| v == r_final).unwrap();
    // Traces start from rest, so a step at the first sample jumps from zero.
    let r_before = if k0 > 0 { r[k0 - 1] } else { 0.0 };
    let jump = r_final - r_before;
    if jump == 0.0 || r_final == 0.0 {
        return Err(Error::invalid("zero-amplitude step; overshoot is undefined"));
    }
    let y_initial = y[k0];
    let step = if r_final != y_initial { r_final - y_initial } else { jump };

    let n = y.len();
    let tail = (n / 20).max(1);
    let y_final = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let ess = (r_final - y_final).abs();

    let dir = jump.signum();
    let peak = y[k0..]
        .iter()
        .map(|&v| dir * (v - r_final))
        .fold(f64::NEG_INFINITY, f64::max);
    let os_pct = 100.0 * (peak / step.abs()).max(0.0);

    let band = band_pct / 100.0 * r_final.abs();
    let last_out = (k0..n).rev().find(|&k| (y[k] - r_final).abs() > band);
    let (tss, settled) = match last_out {
        None => (Some(0.0), true),
        Some(k) if k == n - 1 => (None, false),
        Some(k) => (Some(t[k] - t[k0]), true),
    };
    Ok(StepMetrics {
        tss,
        os_pct,
        ess,
        settled,
    })
}

pub fn check_requirements(m: &StepMetrics, req: &Requirement) -> Verdict {
    let tss_ok = matches!(m.tss, Some(tss) if tss <= req.tss_max);
    let os_ok = m.os_pct <= req.os_max;
    let ess_ok = m.ess <= req.ess_max + ESS_REL_TOL * req.reference.abs();
    Verdict {
        pass: m.settled && tss_ok && os_ok && ess_ok,
        settled: m.settled,
        tss_ok,
        os_ok,
        ess_ok,
    }
}

/// Plain-text table with right-aligned numeric columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(title: &str, headers: &[&str]) -> Self {
        Table {
            title: title.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        table_report(&self.title, &self.headers, &self.rows, &self.notes)
    }
}

/// Renders rows as an aligned text table. The first column is left aligned,
/// the rest right aligned.
pub fn table_report(title: &str, headers: &[String], rows: &[Vec<String>], notes: &[String]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let fmt_row = |cells: &[String]| -> String {
        let mut line = String::new();
        for i in 0..cols {
            let cell = cells.get(i).map(String::as_str).unwrap_or("");
            let pad = widths[i] - cell.chars().count();
            if i > 0 {
                line.push_str("  ");
            }
            if i == 0 {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            }
        }
        line.trim_end().to_string()
    };
    let total: usize = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
    let mut out = String::new();
    if !title.is_empty() {
        out.push_str(title);
        out.push('\n');
    }
    out.push_str(&fmt_row(headers));
    out.push('\n');
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row));
        out.push('\n');
    }
    for note in notes {
        out.push_str(note);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, ts: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * ts).collect()
    }

    #[test]
    fn perfect_tracking() {
        let t = grid(100, 0.01);
        let r = vec![1.0; 100];
        let m = analyze_step_samples(&t, &r, &r, 2.0).unwrap();
        assert_eq!(m.tss, Some(0.0));
        assert_eq!(m.os_pct, 0.0);
        assert_eq!(m.ess, 0.0);
        assert!(m.settled);
    }

    #[test]
    fn initial_sample_at_rest_still_gives_zero_tss() {
        let t = grid(100, 0.01);
        let r = vec![1.0; 100];
        let mut y = vec![1.0; 100];
        y[0] = 0.0;
        let m = analyze_step_samples(&t, &r, &y, 2.0).unwrap();
        assert_eq!(m.tss, Some(0.0));
    }

    #[test]
    fn first_order_lag() {
        let ts = 0.001;
        let t = grid(20_001, ts);
        let r = vec![1.0; t.len()];
        let y: Vec<f64> = t.iter().map(|&t| 1.0 - (-t).exp()).collect();
        let m = analyze_step_samples(&t, &r, &y, 2.0).unwrap();
        let want = -(0.02f64).ln();
        assert!((m.tss.unwrap() - want).abs() <= ts, "{:?}", m.tss);
        assert_eq!(m.os_pct, 0.0);
        assert!(m.ess < 1e-8);
    }

    #[test]
    fn ten_percent_peak() {
        let t = grid(5, 1.0);
        let r = vec![1.0; 5];
        let y = vec![0.0, 0.8, 1.1, 1.0, 1.0];
        let m = analyze_step_samples(&t, &r, &y, 2.0).unwrap();
        assert!((m.os_pct - 10.0).abs() < 1e-12);
    }

    #[test]
    fn unsettled_and_zero_step() {
        let t = grid(4, 1.0);
        let r = vec![1.0; 4];
        let m = analyze_step_samples(&t, &r, &[0.0, 0.5, 0.9, 0.5], 2.0).unwrap();
        assert!(!m.settled);
        assert_eq!(m.tss, None);
        assert!(analyze_step_samples(&t, &[0.0; 4], &[0.0; 4], 2.0).is_err());
    }

    #[test]
    fn negative_step_overshoot() {
        let t = grid(5, 1.0);
        let r = vec![-2.0; 5];
        let y = vec![0.0, -1.5, -2.2, -2.0, -2.0];
        let m = analyze_step_samples(&t, &r, &y, 2.0).unwrap();
        assert!((m.os_pct - 10.0).abs() < 1e-9);
    }

    #[test]
    fn delayed_step_measures_from_step_instant() {
        let t = grid(6, 1.0);
        let r = vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let y = vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0];
        let m = analyze_step_samples(&t, &r, &y, 2.0).unwrap();
        assert_eq!(m.tss, Some(1.0));
    }

    #[test]
    fn requirement_rows() {
        let row1 = Requirement::new(10.0, "deg/s", 0.2, 5.0, 0.0).unwrap();
        let good = StepMetrics {
            tss: Some(0.19),
            os_pct: 4.0,
            ess: 0.0,
            settled: true,
        };
        assert!(check_requirements(&good, &row1).pass);

        let dec_vel = Requirement::new(10.0, "deg/s", 0.5, 10.0, 0.0).unwrap();
        let v = check_requirements(
            &StepMetrics {
                tss: Some(0.56),
                os_pct: 11.11,
                ess: 0.0,
                settled: true,
            },
            &dec_vel,
        );
        assert!(!v.pass && !v.tss_ok && !v.os_ok && v.ess_ok);

        let unsettled = StepMetrics {
            tss: None,
            os_pct: 0.0,
            ess: 0.0,
            settled: false,
        };
        let v = check_requirements(&unsettled, &Requirement::new(1.0, "", 1e9, 1e9, 1e9).unwrap());
        assert!(!v.pass);
    }

    #[test]
    fn ess_relative_slack() {
        let req = Requirement::new(90.0, "deg", 60.0, 10.0, 0.0).unwrap();
        let mut m = StepMetrics {
            tss: Some(10.0),
            os_pct: 0.0,
            ess: 8.9e-5,
            settled: true,
        };
        assert!(check_requirements(&m, &req).pass);
        m.ess = 9.1e-5;
        assert!(!check_requirements(&m, &req).pass);
    }

    #[test]
    fn requirement_validation() {
        assert!(Requirement::new(10.0, "", -1.0, 5.0, 0.0).is_err());
        assert!(Requirement::new(0.0, "", 1.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn constants_registry() {
        assert_eq!(constants::lookup("actuator_max"), Some(350_000.0));
        assert_eq!(constants::lookup("sidereal_rate"), Some(0.004166));
        assert_eq!(constants::lookup("default_ts"), Some(0.010));
        assert_eq!(constants::lookup("nope"), None);
    }

    #[test]
    fn table_alignment() {
        let mut t = Table::new("T", &["loop", "tss"]);
        t.push(vec!["a".into(), "0.2".into()]);
        t.push(vec!["longer".into(), "10.25".into()]);
        let s = t.render();
        assert_eq!(s, "T\nloop      tss\n-------------\na         0.2\nlonger  10.25\n");
    }
}
