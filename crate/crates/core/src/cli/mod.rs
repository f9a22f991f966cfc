//! The `gemservo` command line.
//!
//! ```text
//! gemservo [--ts S] [--band PCT] [--json] [--out DIR] <command>
//!   identify <CSV>... [--augment] [--guess PLANT.json]
//!   simulate <SCENARIO.json | bundled:NAME> [--loop-delay]
//!   workspace [--geometry GEOM.json] [--n1 N] [--n2 N] [--theta1-min DEG] ...
//!   reproduce [--project PROJECT.json]
//!   metrics <TRACE.csv> [--requirement REQ.json]
//! ```
//!
//! Exit codes: 0 pass, 1 a requirement or asserted check failed, 2 usage,
//! input or configuration error, 3 numerical divergence.
//!
//! File formats:
//!
//! * datasets: CSV with header `t,u,y` (s, Hz, deg/s or deg)
//! * plants: `{"num": [..], "den": [..]}`, descending powers of `s`
//! * requirements: `{"reference": 10, "units": "deg/s", "tss_max": 0.2, "os_max": 5, "ess_max": 0}`
//! * geometry: `{"l1": 1.0, "l2": 0.5, "alpha_deg": 4.6}`
//! * traces: CSV with header `t,r,e,u,u_sat,y`
//! * scenarios and controllers: see [`crate::config`]

mod reproduce;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{load_bundled_scenario, load_scenario, LoadedScenario, Overrides, ProjectConfig};
use crate::kinematics::{workspace, workspace_csv, JointLimits, MountGeometry};
use crate::lti::TransferFunction;
use crate::metrics::{analyze_step, check_requirements, Requirement, StepMetrics, Verdict};
use crate::simloop::{max_control, run, Controller, SimTrace};
use crate::sysid::{fit_second_order, integrator_augment, select_best, DataSet, DatasetFormat, FitReport};
use crate::{Error, Result};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gemservo", version, about = "Servo identification, design and simulation for an equatorial mount")]
pub struct Cli {
    /// Controller sampling period, s.
    #[arg(long, global = true)]
    pub ts: Option<f64>,
    /// Settling band, percent of the final value.
    #[arg(long, global = true)]
    pub band: Option<f64>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit second-order velocity models to datasets and keep the best.
    Identify(IdentifyArgs),
    /// Run one closed-loop scenario.
    Simulate(SimulateArgs),
    /// Sample the effector workspace on a joint grid.
    Workspace(WorkspaceArgs),
    /// Run the bundled comparison study.
    Reproduce(ReproduceArgs),
    /// Step metrics of a recorded trace.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(required = true)]
    pub datasets: Vec<PathBuf>,
    /// Also write the integrator-augmented position model.
    #[arg(long)]
    pub augment: bool,
    /// Plant JSON used as an extra starting point.
    #[arg(long)]
    pub guess: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file, or `bundled:NAME` for a shipped scenario.
    pub scenario: String,
    /// Apply each command one sample late.
    #[arg(long)]
    pub loop_delay: bool,
}

#[derive(Debug, Args)]
pub struct WorkspaceArgs {
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long, default_value_t = 73)]
    pub n1: usize,
    #[arg(long, default_value_t = 73)]
    pub n2: usize,
    #[arg(long, default_value_t = -180.0, allow_hyphen_values = true)]
    pub theta1_min: f64,
    #[arg(long, default_value_t = 180.0, allow_hyphen_values = true)]
    pub theta1_max: f64,
    #[arg(long, default_value_t = -180.0, allow_hyphen_values = true)]
    pub theta2_min: f64,
    #[arg(long, default_value_t = 180.0, allow_hyphen_values = true)]
    pub theta2_max: f64,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Project file; defaults to the bundled one.
    #[arg(long)]
    pub project: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub trace: PathBuf,
    #[arg(long)]
    pub requirement: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    if let Some(ts) = cli.ts {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::invalid("--ts must be positive"));
        }
    }
    if let Some(b) = cli.band {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid("--band must be positive"));
        }
    }
    match &cli.command {
        Command::Identify(a) => cmd_identify(cli, a, out),
        Command::Simulate(a) => cmd_simulate(cli, a, out),
        Command::Workspace(a) => cmd_workspace(cli, a, out),
        Command::Reproduce(a) => reproduce::cmd_reproduce(cli, a, out),
        Command::Metrics(a) => cmd_metrics(cli, a, out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_out(cli: &Cli, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cli.out).map_err(io_err(&cli.out))?;
    let path = cli.out.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

pub(crate) fn fmt_tss(tss: Option<f64>) -> String {
    tss.map_or_else(|| "unsettled".into(), |t| format!("{t:.3}"))
}

#[derive(Serialize)]
struct IdentifyReport<'a> {
    reports: &'a [FitReport],
    best: usize,
    model: &'a TransferFunction,
    #[serde(skip_serializing_if = "Option::is_none")]
    position_model: Option<&'a TransferFunction>,
    files: Vec<String>,
}

fn cmd_identify(cli: &Cli, a: &IdentifyArgs, out: &mut dyn Write) -> Result<i32> {
    let guess: Option<TransferFunction> = a.guess.as_deref().map(read_json).transpose()?;
    let mut reports = Vec::new();
    for path in &a.datasets {
        let ds = DataSet::load(path, DatasetFormat::Csv)?;
        let rep = fit_second_order(&ds, guess.as_ref()).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        reports.push(rep);
    }
    let best = select_best(&reports).expect("at least one dataset");
    let model = reports[best].model.clone();
    let mut files = vec![write_out(cli, "model.json", &to_json(&model))?];
    let position = a.augment.then(|| integrator_augment(&model));
    if let Some(p) = &position {
        files.push(write_out(cli, "model_position.json", &to_json(p))?);
    }
    let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();

    if cli.json {
        let rep = IdentifyReport {
            reports: &reports,
            best,
            model: &model,
            position_model: position.as_ref(),
            files,
        };
        emit(out, &to_json(&rep))?;
        return Ok(EXIT_PASS);
    }
    let mut t = crate::metrics::Table::new(
        "Identification",
        &["dataset", "fit (%)", "FPE", "MSE", "converged", "stable"],
    );
    for r in &reports {
        t.push(vec![
            r.label.clone(),
            format!("{:.2}", r.fit_pct),
            format!("{:.4e}", r.fpe),
            format!("{:.4e}", r.mse),
            r.converged.to_string(),
            r.stable.to_string(),
        ]);
        for w in &r.warnings {
            t.notes.push(format!("{}: {w}", r.label));
        }
    }
    let mut text = t.render();
    text.push_str(&format!("best: {} ({})\n", reports[best].label, describe_tf(&model)));
    if let Some(p) = &position {
        text.push_str(&format!("position model: {}\n", describe_tf(p)));
    }
    for f in &files {
        text.push_str(&format!("wrote {f}\n"));
    }
    emit(out, &text)?;
    Ok(EXIT_PASS)
}

fn describe_tf(tf: &TransferFunction) -> String {
    let join = |v: &[f64]| v.iter().map(|c| format!("{c:.6}")).collect::<Vec<_>>().join(", ");
    format!("num [{}] / den [{}]", join(tf.num()), join(tf.den()))
}

#[derive(Debug, Serialize)]
pub(crate) struct SimulationSummary {
    pub name: String,
    pub controller: String,
    pub gains: Controller,
    pub samples: usize,
    pub ts: f64,
    pub band_pct: f64,
    pub metrics: Option<StepMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requirement: Option<Requirement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    pub max_control: f64,
    pub saturation_fraction: f64,
    pub clipped_below: usize,
    pub diverged: bool,
    pub notes: Vec<String>,
}

pub(crate) fn summarize(ls: &LoadedScenario) -> Result<(SimulationSummary, SimTrace)> {
    let tr = run(&ls.scenario)?;
    let metrics = if tr.diverged || tr.is_empty() {
        None
    } else {
        Some(analyze_step(&tr, ls.band_pct)?)
    };
    let verdict = match (&metrics, &ls.requirement) {
        (Some(m), Some(r)) => Some(check_requirements(m, r)),
        _ => None,
    };
    let mut notes = Vec::new();
    let clipped = tr.clipped_below();
    if clipped > 0 {
        let lim = ls.scenario.controller.limits();
        notes.push(format!(
            "{clipped} command samples fell below the lower limit {} Hz and were clipped; negative gains ask for negative PWM frequency",
            lim.min
        ));
    }
    if tr.diverged {
        notes.push(format!("simulation diverged at t = {:.3} s; trace truncated", tr.t.last().copied().unwrap_or(0.0)));
    }
    Ok((
        SimulationSummary {
            name: ls.name.clone(),
            controller: ls.controller_label.clone(),
            gains: ls.scenario.controller.clone(),
            samples: tr.len(),
            ts: ls.scenario.ts,
            band_pct: ls.band_pct,
            metrics,
            requirement: ls.requirement.clone(),
            verdict,
            max_control: max_control(&tr),
            saturation_fraction: tr.saturation_fraction,
            clipped_below: clipped,
            diverged: tr.diverged,
            notes,
        },
        tr,
    ))
}

fn render_summary(s: &SimulationSummary) -> String {
    let mut text = format!("scenario: {}\ncontroller: {}\n", s.name, s.controller);
    match &s.gains {
        Controller::Pid(g) => text.push_str(&format!(
            "gains: kp {} ki {} kd {} N {}\n",
            g.kp, g.ki, g.kd, g.deriv_filter_n
        )),
        Controller::StateFeedback { gains, .. } => {
            text.push_str(&format!("gains: k1 {:?} k2 {}\n", gains.k1, gains.k2))
        }
    }
    text.push_str(&format!("samples: {} at ts {} s\n", s.samples, s.ts));
    if let Some(m) = &s.metrics {
        text.push_str(&format!(
            "tss: {} s\n%OS: {:.3}\ness: {:.6e}\n",
            fmt_tss(m.tss),
            m.os_pct,
            m.ess
        ));
    }
    text.push_str(&format!(
        "max_control: {:.1} Hz\nsaturation: {:.2}% of samples\n",
        s.max_control,
        100.0 * s.saturation_fraction
    ));
    if let (Some(v), Some(r)) = (&s.verdict, &s.requirement) {
        let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
        text.push_str(&format!(
            "requirement: {} (tss <= {} s {}, %OS <= {} {}, ess <= {} {})\n",
            if v.pass { "PASS" } else { "FAIL" },
            r.tss_max,
            mark(v.tss_ok),
            r.os_max,
            mark(v.os_ok),
            r.ess_max,
            mark(v.ess_ok)
        ));
    }
    for n in &s.notes {
        text.push_str(&format!("note: {n}\n"));
    }
    text
}

fn exit_for(s: &SimulationSummary) -> i32 {
    if s.diverged {
        EXIT_DIVERGED
    } else if matches!(s.verdict, Some(v) if !v.pass) {
        EXIT_FAIL
    } else {
        EXIT_PASS
    }
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let ov = Overrides {
        ts: cli.ts,
        band: cli.band,
        loop_delay: a.loop_delay,
    };
    let ls = match a.scenario.strip_prefix("bundled:") {
        Some(name) => {
            let rel = if name.contains('/') { name.to_string() } else { format!("scenarios/{name}") };
            load_bundled_scenario(&rel, &ov)?
        }
        None => load_scenario(Path::new(&a.scenario), &ov)?,
    };
    let (summary, trace) = summarize(&ls)?;
    let stem = ls.name.clone();
    let trace_path = write_out(cli, &format!("{stem}.trace.csv"), &trace.to_csv_string())?;
    let metrics_path = write_out(cli, &format!("{stem}.metrics.json"), &to_json(&summary))?;
    if cli.json {
        emit(out, &to_json(&summary))?;
    } else {
        let mut text = render_summary(&summary);
        text.push_str(&format!("wrote {}\nwrote {}\n", trace_path.display(), metrics_path.display()));
        emit(out, &text)?;
    }
    Ok(exit_for(&summary))
}

#[derive(Serialize)]
struct WorkspaceSummary {
    points: usize,
    reach: f64,
    x: (f64, f64),
    y: (f64, f64),
    z: (f64, f64),
    max_sphere_error: f64,
    file: String,
}

fn cmd_workspace(cli: &Cli, a: &WorkspaceArgs, out: &mut dyn Write) -> Result<i32> {
    let geom: MountGeometry = match &a.geometry {
        Some(p) => read_json(p)?,
        None => MountGeometry::default(),
    };
    let limits = JointLimits {
        theta1: (a.theta1_min.to_radians(), a.theta1_max.to_radians()),
        theta2: (a.theta2_min.to_radians(), a.theta2_max.to_radians()),
    };
    let pts = workspace(&geom, a.n1, a.n2, &limits)?;
    let path = write_out(cli, "workspace.csv", &workspace_csv(&pts))?;
    let range = |f: fn(&crate::kinematics::WorkspacePoint) -> f64| {
        pts.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let reach = geom.reach();
    let s = WorkspaceSummary {
        points: pts.len(),
        reach,
        x: range(|p| p.pos.x),
        y: range(|p| p.pos.y),
        z: range(|p| p.pos.z),
        max_sphere_error: pts
            .iter()
            .map(|p| (p.pos.norm().powi(2) - reach * reach).abs())
            .fold(0.0, f64::max),
        file: path.display().to_string(),
    };
    if cli.json {
        emit(out, &to_json(&s))?;
    } else {
        emit(
            out,
            &format!(
                "points: {}\nreach: {:.6} m\nx: [{:.6}, {:.6}]\ny: [{:.6}, {:.6}]\nz: [{:.6}, {:.6}]\nmax |r^2 - reach^2|: {:.3e}\nwrote {}\n",
                s.points, s.reach, s.x.0, s.x.1, s.y.0, s.y.1, s.z.0, s.z.1, s.max_sphere_error, s.file
            ),
        )?;
    }
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct MetricsReport {
    samples: usize,
    metrics: StepMetrics,
    max_control: f64,
    saturation_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<Verdict>,
}

fn cmd_metrics(cli: &Cli, a: &MetricsArgs, out: &mut dyn Write) -> Result<i32> {
    let file = fs::File::open(&a.trace).map_err(io_err(&a.trace))?;
    let tr = SimTrace::read_csv(file, &a.trace.display().to_string())?;
    let req: Option<Requirement> = a.requirement.as_deref().map(read_json).transpose()?;
    if let Some(r) = &req {
        r.validate()?;
    }
    let band = cli.band.unwrap_or(crate::metrics::constants::DEFAULT_BAND_PCT);
    let m = analyze_step(&tr, band)?;
    let rep = MetricsReport {
        samples: tr.len(),
        metrics: m,
        max_control: max_control(&tr),
        saturation_fraction: tr.saturation_fraction,
        verdict: req.as_ref().map(|r| check_requirements(&m, r)),
    };
    if cli.json {
        emit(out, &to_json(&rep))?;
    } else {
        let mut text = format!(
            "samples: {}\ntss: {} s\n%OS: {:.3}\ness: {:.6e}\nmax_control: {:.1} Hz\n",
            rep.samples,
            fmt_tss(m.tss),
            m.os_pct,
            m.ess,
            rep.max_control
        );
        if let Some(v) = &rep.verdict {
            text.push_str(&format!("requirement: {}\n", if v.pass { "PASS" } else { "FAIL" }));
        }
        emit(out, &text)?;
    }
    Ok(match rep.verdict {
        Some(v) if !v.pass => EXIT_FAIL,
        _ => EXIT_PASS,
    })
}

/// Project used by `reproduce` when no file is given.
pub fn default_project() -> Result<ProjectConfig> {
    ProjectConfig::bundled()
}
