//! Tracking, disturbance and control-effort tables for every loop and
//! controller of a project, with the reported values alongside.
//!
//! Only property-backed cells are checked: zero steady-state error on
//! loops that are stable, integrating and at rest inside the actuator
//! range, and a peak command equal to the upper limit for PID runs that
//! hit it. Everything else carries the `[r]` marker.

use std::io::Write;

use serde::Serialize;

use super::{emit, fmt_tss, read_json, summarize, to_json, write_out, Cli, ReproduceArgs, EXIT_FAIL, EXIT_PASS};
use crate::config::{
    bundled_scenarios, load_bundled_scenario, ControllerSpec, GainOrdering, Overrides, ProjectConfig, ReportedMetrics,
    ResolveContext,
};
use crate::control::{closed_loop_matrix, eigenvalues, StateFeedbackGains};
use crate::metrics::{Table, ESS_REL_TOL};
use crate::simloop::{
    is_loop_stable, linear_loop, run_disturbance_suite, run_tracking_suite, spectral_radius, Controller,
    DisturbanceSpec, LoopCase,
};
use crate::{Error, Result};

const MARK: &str = "[r]";

#[derive(Debug, Serialize)]
struct TrackingCell {
    #[serde(rename = "loop")]
    loop_name: String,
    controller: String,
    tss: Option<f64>,
    os_pct: Option<f64>,
    ess: Option<f64>,
    diverged: bool,
    /// Spectral radius of the sampled loop without actuator limits.
    spectral_radius: f64,
    linear_stable: bool,
    equilibrium_unsaturated: bool,
    /// `None` when the cell is reported only.
    ess_check: Option<bool>,
    reported: Option<ReportedMetrics>,
}

#[derive(Debug, Serialize)]
struct DisturbanceCell {
    #[serde(rename = "loop")]
    loop_name: String,
    controller: String,
    onset: f64,
    magnitude: f64,
    recovery_time: Option<f64>,
    peak_deviation_pct: f64,
    final_error: f64,
    skipped: Option<String>,
    final_error_check: Option<bool>,
    reported: Option<ReportedMetrics>,
}

#[derive(Debug, Serialize)]
struct ControlCell {
    #[serde(rename = "loop")]
    loop_name: String,
    controller: String,
    max_control: f64,
    upper_limit: f64,
    saturation_fraction: f64,
    clipped_below: usize,
    /// Asserted for PID runs whose command exceeded the upper limit.
    limit_check: Option<bool>,
    reported: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EigenCell {
    #[serde(rename = "loop")]
    loop_name: String,
    controller: String,
    ordering: GainOrdering,
    k1: Vec<f64>,
    /// Continuous closed-loop eigenvalues `[re, im]`.
    eigenvalues: Vec<[f64; 2]>,
    continuous_stable: bool,
    sampled_spectral_radius: f64,
}

#[derive(Debug, Serialize)]
struct ScenarioCell {
    name: String,
    pass: Option<bool>,
    diverged: bool,
    clipped_below: usize,
    notes: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Report {
    project: String,
    ts: f64,
    band_pct: f64,
    tracking: Vec<TrackingCell>,
    disturbance: Vec<DisturbanceCell>,
    control: Vec<ControlCell>,
    eigenvalues: Vec<EigenCell>,
    scenarios: Vec<ScenarioCell>,
    checks_run: usize,
    checks_failed: usize,
    pass: bool,
}

fn r2(v: f64) -> String {
    format!("{v:.2}")
}

fn check_cell(c: Option<bool>) -> String {
    match c {
        None => MARK.into(),
        Some(true) => "ok".into(),
        Some(false) => "FAIL".into(),
    }
}

fn cases(p: &ProjectConfig, ts: f64, band: f64) -> Result<Vec<LoopCase>> {
    let mut out = Vec::new();
    for lp in &p.loops {
        let plant = &p.plants[&lp.plant];
        let req = &p.requirements[&lp.requirement];
        let limits = lp.limits.unwrap_or(p.defaults.limits);
        let ctx = ResolveContext {
            plant,
            requirement: Some(req),
            limits,
            ts,
            band_pct: band,
        };
        for (label, cname) in &lp.controllers {
            let controller = p.controllers[cname].resolve(&ctx).map_err(|e| Error::Config {
                path: p.source.clone(),
                message: format!("loop {} controller {label}: {e}", lp.name),
            })?;
            out.push(LoopCase {
                name: lp.name.clone(),
                controller_label: label.clone(),
                plant: plant.clone(),
                controller,
                requirement: req.clone(),
                ts,
                duration: lp.duration.unwrap_or(10.0 * req.tss_max),
            });
        }
    }
    Ok(out)
}

fn eigen_cells(p: &ProjectConfig, ts: f64) -> Result<Vec<EigenCell>> {
    let mut out = Vec::new();
    for lp in &p.loops {
        let plant = &p.plants[&lp.plant];
        let ss = plant.to_state_space();
        for (label, cname) in &lp.controllers {
            let ControllerSpec::Sf(spec) = &p.controllers[cname] else {
                continue;
            };
            let (Some(k1), Some(k2)) = (&spec.k1, spec.k2) else {
                continue;
            };
            for ordering in [GainOrdering::Phase, GainOrdering::Reversed] {
                let gains = match ordering {
                    GainOrdering::Phase => StateFeedbackGains::new(k1.clone(), k2)?,
                    GainOrdering::Reversed => StateFeedbackGains::from_reversed_ordering(k1, k2)?,
                };
                let ev = eigenvalues(&closed_loop_matrix(&ss, &gains)?);
                let ctrl = Controller::StateFeedback {
                    gains: gains.clone(),
                    limits: lp.limits.unwrap_or(p.defaults.limits),
                };
                let (m, _) = linear_loop(plant, &ctrl, ts)?;
                out.push(EigenCell {
                    loop_name: lp.name.clone(),
                    controller: label.clone(),
                    ordering,
                    k1: gains.k1.clone(),
                    continuous_stable: ev.iter().all(|z| z.re < 0.0),
                    eigenvalues: ev.iter().map(|z| [z.re, z.im]).collect(),
                    sampled_spectral_radius: spectral_radius(&m),
                });
            }
        }
    }
    Ok(out)
}

fn build(p: &ProjectConfig, cli: &Cli) -> Result<Report> {
    let ts = cli.ts.unwrap_or(p.defaults.ts);
    let band = cli.band.unwrap_or(p.defaults.band);
    let cases = cases(p, ts, band)?;
    let tracking_rows = run_tracking_suite(&cases, band)?;
    let dist_rows = run_disturbance_suite(&cases, &DisturbanceSpec::default(), band)?;

    let mut tracking = Vec::new();
    let mut disturbance = Vec::new();
    let mut control = Vec::new();
    for ((case, tr), dr) in cases.iter().zip(&tracking_rows).zip(&dist_rows) {
        let (m, _) = linear_loop(&case.plant, &case.controller, ts)?;
        let rho = spectral_radius(&m);
        let stable = is_loop_stable(&case.plant, &case.controller, ts)?;
        let reported = p.reported(&case.name, &case.controller_label);
        let r_abs = case.requirement.reference.abs();
        let eligible = stable && case.controller.has_integral_action() && !tr.diverged;
        let ess_check = match (&tr.metrics, eligible && tr.equilibrium_unsaturated) {
            (Some(m), true) => Some(m.ess <= ESS_REL_TOL * r_abs),
            _ => None,
        };
        tracking.push(TrackingCell {
            loop_name: case.name.clone(),
            controller: case.controller_label.clone(),
            tss: tr.metrics.and_then(|m| m.tss),
            os_pct: tr.metrics.map(|m| m.os_pct),
            ess: tr.metrics.map(|m| m.ess),
            diverged: tr.diverged,
            spectral_radius: rho,
            linear_stable: stable,
            equilibrium_unsaturated: tr.equilibrium_unsaturated,
            ess_check,
            reported: reported.map(|r| r.tracking),
        });
        let final_error_check = (eligible && tr.equilibrium_unsaturated && dr.skipped.is_none() && !dr.diverged)
            .then_some(dr.final_error <= ESS_REL_TOL * r_abs);
        disturbance.push(DisturbanceCell {
            loop_name: case.name.clone(),
            controller: case.controller_label.clone(),
            onset: dr.onset,
            magnitude: dr.magnitude,
            recovery_time: dr.recovery_time,
            peak_deviation_pct: dr.peak_deviation_pct,
            final_error: dr.final_error,
            skipped: dr.skipped.clone(),
            final_error_check,
            reported: reported.map(|r| r.disturbance),
        });
        let upper = case.controller.limits().max;
        let hit_upper = matches!(case.controller, Controller::Pid(_)) && tr.max_control >= upper && tr.saturation_fraction > 0.0;
        control.push(ControlCell {
            loop_name: case.name.clone(),
            controller: case.controller_label.clone(),
            max_control: tr.max_control,
            upper_limit: upper,
            saturation_fraction: tr.saturation_fraction,
            clipped_below: tr.clipped_below,
            limit_check: hit_upper.then_some(tr.max_control == upper),
            reported: reported.map(|r| r.max_control),
        });
    }

    let ov = Overrides {
        ts: cli.ts,
        band: cli.band,
        loop_delay: false,
    };
    let mut scenarios = Vec::new();
    for rel in bundled_scenarios() {
        let ls = load_bundled_scenario(rel, &ov)?;
        let (s, _) = summarize(&ls)?;
        scenarios.push(ScenarioCell {
            name: s.name,
            pass: s.verdict.map(|v| v.pass),
            diverged: s.diverged,
            clipped_below: s.clipped_below,
            notes: s.notes,
        });
    }

    let checks: Vec<bool> = tracking
        .iter()
        .filter_map(|c| c.ess_check)
        .chain(disturbance.iter().filter_map(|c| c.final_error_check))
        .chain(control.iter().filter_map(|c| c.limit_check))
        .collect();
    let failed = checks.iter().filter(|ok| !**ok).count();
    Ok(Report {
        project: p.source.clone(),
        ts,
        band_pct: band,
        tracking,
        disturbance,
        control,
        eigenvalues: eigen_cells(p, ts)?,
        scenarios,
        checks_run: checks.len(),
        checks_failed: failed,
        pass: failed == 0,
    })
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map_or_else(|| "-".into(), f)
}

fn render(rep: &Report) -> String {
    let marked = |s: String| format!("{s} {MARK}");
    let mut out = format!(
        "project: {}\nts: {} s, settling band: {}%\n\n",
        rep.project, rep.ts, rep.band_pct
    );

    let mut t = Table::new(
        "Trajectory tracking",
        &["loop", "controller", "tss (s)", "reported", "%OS", "reported", "ess", "reported", "ess check", "rho"],
    );
    for c in &rep.tracking {
        let p = c.reported;
        t.push(vec![
            c.loop_name.clone(),
            c.controller.clone(),
            if c.diverged { "diverged".into() } else { marked(fmt_tss(c.tss)) },
            opt(p.map(|p| p.tss), r2),
            opt(c.os_pct, |v| marked(r2(v))),
            opt(p.map(|p| p.os_pct), r2),
            opt(c.ess, |v| format!("{v:.3e}")),
            opt(p.map(|p| p.ess), |v| format!("{v}")),
            check_cell(c.ess_check),
            format!("{:.5}", c.spectral_radius),
        ]);
    }
    t.notes.push(format!("{MARK} reported, not asserted"));
    t.notes
        .push("rho: spectral radius of the sampled loop without actuator limits; above 1 is unstable".into());
    t.notes.push(
        "ess is checked on loops that are stable, integrating and at rest inside the actuator range".into(),
    );
    out.push_str(&t.render());
    out.push('\n');

    let mut t = Table::new(
        "Disturbance rejection",
        &["loop", "controller", "onset (s)", "d (Hz)", "recovery (s)", "reported tss", "peak dev (%)", "reported %OS", "final err", "check"],
    );
    for c in &rep.disturbance {
        let p = c.reported;
        if let Some(why) = &c.skipped {
            t.push(vec![
                c.loop_name.clone(),
                c.controller.clone(),
                "-".into(),
                "-".into(),
                format!("skipped: {why}"),
                opt(p.map(|p| p.tss), r2),
                "-".into(),
                opt(p.map(|p| p.os_pct), r2),
                "-".into(),
                MARK.into(),
            ]);
            continue;
        }
        t.push(vec![
            c.loop_name.clone(),
            c.controller.clone(),
            format!("{:.2}", c.onset),
            format!("{:.1}", c.magnitude),
            marked(fmt_tss(c.recovery_time)),
            opt(p.map(|p| p.tss), r2),
            marked(r2(c.peak_deviation_pct)),
            opt(p.map(|p| p.os_pct), r2),
            format!("{:.3e}", c.final_error),
            check_cell(c.final_error_check),
        ]);
    }
    t.notes.push(format!("{MARK} reported, not asserted"));
    t.notes.push(
        "input step disturbance of 10% of the steady command, or of the peak command when that is zero".into(),
    );
    out.push_str(&t.render());
    out.push('\n');

    let mut t = Table::new(
        "Maximum control signal",
        &["loop", "controller", "max u (Hz)", "reported", "saturated (%)", "clipped low", "check"],
    );
    for c in &rep.control {
        t.push(vec![
            c.loop_name.clone(),
            c.controller.clone(),
            if c.limit_check.is_some() { format!("{:.1}", c.max_control) } else { marked(format!("{:.1}", c.max_control)) },
            opt(c.reported, |v| format!("{v:.0}")),
            format!("{:.2}", 100.0 * c.saturation_fraction),
            c.clipped_below.to_string(),
            check_cell(c.limit_check),
        ]);
    }
    t.notes.push(format!("{MARK} reported, not asserted"));
    t.notes.push("checked: PID runs that reach the upper limit peak exactly at it".into());
    out.push_str(&t.render());
    out.push('\n');

    if !rep.eigenvalues.is_empty() {
        let mut t = Table::new(
            "Reported state-feedback gains under both state orderings",
            &["loop", "ordering", "k1 (phase order)", "continuous eigenvalues", "stable", "rho"],
        );
        for c in &rep.eigenvalues {
            let ev: Vec<String> = c
                .eigenvalues
                .iter()
                .map(|[re, im]| {
                    if *im == 0.0 {
                        format!("{re:.4}")
                    } else {
                        format!("{re:.4}{:+.4}j", im)
                    }
                })
                .collect();
            t.push(vec![
                c.loop_name.clone(),
                format!("{:?}", c.ordering).to_lowercase(),
                format!("{:?}", c.k1),
                ev.join(", "),
                c.continuous_stable.to_string(),
                format!("{:.5}", c.sampled_spectral_radius),
            ]);
        }
        out.push_str(&t.render());
        out.push('\n');
    }

    let mut t = Table::new("Bundled scenarios", &["scenario", "requirement", "clipped low", "notes"]);
    for s in &rep.scenarios {
        t.push(vec![
            s.name.clone(),
            match (s.diverged, s.pass) {
                (true, _) => "diverged".into(),
                (_, Some(true)) => "pass".into(),
                (_, Some(false)) => "fail".into(),
                (_, None) => "-".into(),
            },
            s.clipped_below.to_string(),
            s.notes.join("; "),
        ]);
    }
    out.push_str(&t.render());
    out.push('\n');
    out.push_str(&format!(
        "checks: {} run, {} failed: {}\n",
        rep.checks_run,
        rep.checks_failed,
        if rep.pass { "PASS" } else { "FAIL" }
    ));
    out
}

pub(super) fn cmd_reproduce(cli: &Cli, a: &ReproduceArgs, out: &mut dyn Write) -> Result<i32> {
    let project = match &a.project {
        Some(path) => {
            // Surface JSON syntax errors with the file name before name resolution.
            let _: serde_json::Value = read_json(path)?;
            ProjectConfig::load(path)?
        }
        None => super::default_project()?,
    };
    let rep = build(&project, cli)?;
    let text = render(&rep);
    let json = to_json(&rep);
    let txt_path = write_out(cli, "reproduce.txt", &text)?;
    let json_path = write_out(cli, "reproduce.json", &json)?;
    if cli.json {
        emit(out, &json)?;
    } else {
        emit(out, &text)?;
        emit(out, &format!("wrote {}\nwrote {}\n", txt_path.display(), json_path.display()))?;
    }
    Ok(if rep.pass { EXIT_PASS } else { EXIT_FAIL })
}
