//! JSON file formats: controllers, scenarios and the project file that
//! bundles the mount's models, gains and requirements.
//!
//! Plants are `{"num": [..], "den": [..]}` in descending powers of `s`.
//! Wherever a plant, controller or requirement is expected, a string is
//! read as a path relative to the referring file.
//!
//! Controllers:
//!
//! ```json
//! {"type": "pid", "kp": 1.0, "ki": 0.5, "kd": 0.0, "n": 100}
//! {"type": "pid", "design": "requirement"}
//! {"type": "sf", "k1": [1.0, 2.0], "k2": 3.0, "ordering": "reversed"}
//! {"type": "sf", "poles": [[-2, 1], [-2, -1], [-10, 0]]}
//! {"type": "sf", "design": "requirement"}
//! ```
//!
//! `k1` is in phase-variable order (position-like state first) unless
//! `"ordering": "reversed"`, which takes the highest derivative first.
//! Any controller may carry `"limits": {"umin": .., "umax": ..}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Complex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::control::{
    place_poles, tune_pid, Limits, PidGains, PoleDesign, StateFeedbackGains, TuningProblem, DEFAULT_DERIV_FILTER_N,
};
use crate::kinematics::MountGeometry;
use crate::lti::{TransferFunction, DEFAULT_TS};
use crate::metrics::constants::DEFAULT_BAND_PCT;
use crate::metrics::Requirement;
use crate::simloop::{Controller, Disturbance, Scenario, Signal};
use crate::{Error, Result};

/// Where referenced files are read from.
#[derive(Debug, Clone, PartialEq)]
pub enum AssetRoot {
    Dir(PathBuf),
    /// The files shipped in the crate's `assets/` directory, compiled in.
    Bundled,
}

const BUNDLED: &[(&str, &str)] = &[
    ("project.json", include_str!("../assets/project.json")),
    ("plants/ascension_velocity.json", include_str!("../assets/plants/ascension_velocity.json")),
    ("plants/ascension_position.json", include_str!("../assets/plants/ascension_position.json")),
    ("plants/declination_velocity.json", include_str!("../assets/plants/declination_velocity.json")),
    ("plants/declination_position.json", include_str!("../assets/plants/declination_position.json")),
    (
        "scenarios/ascension_velocity_sf.json",
        include_str!("../assets/scenarios/ascension_velocity_sf.json"),
    ),
    (
        "scenarios/declination_velocity_pid_table.json",
        include_str!("../assets/scenarios/declination_velocity_pid_table.json"),
    ),
    (
        "scenarios/ascension_position_pid.json",
        include_str!("../assets/scenarios/ascension_position_pid.json"),
    ),
];

/// Names of the bundled scenario files, relative to the asset root.
pub fn bundled_scenarios() -> Vec<&'static str> {
    BUNDLED
        .iter()
        .map(|(name, _)| *name)
        .filter(|n| n.starts_with("scenarios/"))
        .collect()
}

fn normalize(rel: &str) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for p in rel.split('/') {
        match p {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            _ => parts.push(p),
        }
    }
    parts.join("/")
}

impl AssetRoot {
    /// Reads `rel` (relative to `base`, itself relative to the root).
    /// Returns the text and a display name for diagnostics.
    pub fn read(&self, base: &str, rel: &str) -> Result<(String, String)> {
        match self {
            AssetRoot::Dir(dir) => {
                let path = if Path::new(rel).is_absolute() {
                    PathBuf::from(rel)
                } else {
                    dir.join(base).join(rel)
                };
                let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok((text, path.display().to_string()))
            }
            AssetRoot::Bundled => {
                let key = normalize(&format!("{base}/{rel}"));
                BUNDLED
                    .iter()
                    .find(|(name, _)| *name == key)
                    .map(|(_, text)| (text.to_string(), format!("bundled:{key}")))
                    .ok_or_else(|| Error::config(format!("bundled:{key}"), "no such bundled file"))
            }
        }
    }
}

fn parent_of(rel: &str) -> String {
    match rel.rfind('/') {
        Some(i) => rel[..i].to_string(),
        None => String::new(),
    }
}

fn parse_json<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::config(source, format!("line {}, column {}: {e}", e.line(), e.column())))
}

/// Inline object or path to a file holding one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ref<T> {
    Path(String),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Ref<T> {
    /// `base` is the directory of the referring file, relative to `root`.
    pub fn load(&self, root: &AssetRoot, base: &str) -> Result<T> {
        match self {
            Ref::Inline(v) => Ok(v.clone()),
            Ref::Path(p) => {
                let (text, source) = root.read(base, p)?;
                parse_json(&text, &source)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainOrdering {
    #[default]
    Phase,
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    /// Derive the gains from the requirement in effect.
    Requirement,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ki: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<Limits>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(default)]
    pub ordering: GainOrdering,
    /// Desired closed-loop poles as `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<Limits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ControllerSpec {
    Pid(PidSpec),
    Sf(SfSpec),
}

/// Everything a controller spec may need to become concrete gains.
#[derive(Debug, Clone, Copy)]
pub struct ResolveContext<'a> {
    pub plant: &'a TransferFunction,
    pub requirement: Option<&'a Requirement>,
    /// Limits used when the spec carries none.
    pub limits: Limits,
    pub ts: f64,
    pub band_pct: f64,
}

impl ControllerSpec {
    pub fn pid(kp: f64, ki: f64, kd: f64) -> Self {
        ControllerSpec::Pid(PidSpec {
            kp: Some(kp),
            ki: Some(ki),
            kd: Some(kd),
            ..Default::default()
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            ControllerSpec::Pid(_) => "PID",
            ControllerSpec::Sf(_) => "State-Feedback",
        }
    }

    pub fn limits(&self) -> Option<Limits> {
        match self {
            ControllerSpec::Pid(p) => p.limits,
            ControllerSpec::Sf(s) => s.limits,
        }
    }

    fn need_requirement<'a>(ctx: &ResolveContext<'a>) -> Result<&'a Requirement> {
        ctx.requirement
            .ok_or_else(|| Error::invalid("\"design\": \"requirement\" needs a requirement"))
    }

    pub fn resolve(&self, ctx: &ResolveContext) -> Result<Controller> {
        let limits = self.limits().unwrap_or(ctx.limits);
        limits.validate()?;
        match self {
            ControllerSpec::Pid(p) => {
                let n = p.n.unwrap_or(DEFAULT_DERIV_FILTER_N);
                let gains = match (p.design, p.kp) {
                    (Some(_), Some(_)) => {
                        return Err(Error::invalid("PID spec gives both gains and a design mode"));
                    }
                    (Some(DesignMode::Requirement), None) => {
                        let req = Self::need_requirement(ctx)?;
                        let mut problem = TuningProblem::new(req.clone(), limits);
                        problem.ts = ctx.ts;
                        problem.band_pct = ctx.band_pct;
                        problem.deriv_filter_n = n;
                        tune_pid(ctx.plant, &problem)?
                    }
                    (None, Some(kp)) => PidGains::new(kp, p.ki.unwrap_or(0.0), p.kd.unwrap_or(0.0), n, limits)?,
                    (None, None) => return Err(Error::invalid("PID spec needs kp or a design mode")),
                };
                Ok(Controller::Pid(gains))
            }
            ControllerSpec::Sf(s) => {
                let chosen = [s.k1.is_some(), s.poles.is_some(), s.design.is_some()]
                    .iter()
                    .filter(|b| **b)
                    .count();
                if chosen != 1 {
                    return Err(Error::invalid(
                        "state-feedback spec needs exactly one of k1/k2, poles or a design mode",
                    ));
                }
                let ss = ctx.plant.to_state_space();
                let gains = if let Some(k1) = &s.k1 {
                    let k2 = s.k2.ok_or_else(|| Error::invalid("state-feedback spec has k1 but no k2"))?;
                    match s.ordering {
                        GainOrdering::Phase => StateFeedbackGains::new(k1.clone(), k2)?,
                        GainOrdering::Reversed => StateFeedbackGains::from_reversed_ordering(k1, k2)?,
                    }
                } else if let Some(poles) = &s.poles {
                    let poles: Vec<Complex<f64>> = poles.iter().map(|p| Complex::new(p[0], p[1])).collect();
                    place_poles(&ss, &poles)?
                } else {
                    let req = Self::need_requirement(ctx)?;
                    let poles = PoleDesign::from_requirement(req).poles_for(ctx.plant);
                    place_poles(&ss, &poles)?
                };
                Ok(Controller::StateFeedback { gains, limits })
            }
        }
    }
}

/// A simulation scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub plant: Ref<TransferFunction>,
    pub controller: Ref<ControllerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<Ref<Requirement>>,
    /// Defaults to a step of the requirement's reference amplitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Signal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<Disturbance>,
    /// Seconds; defaults to ten times the requirement's settling bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<f64>,
    #[serde(default)]
    pub loop_delay: bool,
    /// Default limits for a controller that carries none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<Limits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<f64>,
}

/// A scenario with every reference resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub name: String,
    pub scenario: Scenario,
    pub requirement: Option<Requirement>,
    pub band_pct: f64,
    pub controller_label: String,
}

/// Command-line overrides applied while resolving a scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub ts: Option<f64>,
    pub band: Option<f64>,
    pub loop_delay: bool,
}

impl ScenarioFile {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        parse_json(text, source)
    }

    /// Resolves references from `base` (the scenario's directory relative
    /// to `root`). `source` names the file in error messages.
    pub fn resolve(&self, root: &AssetRoot, base: &str, source: &str, ov: &Overrides) -> Result<LoadedScenario> {
        let at = |field: &str, e: Error| Error::config(source, format!("{field}: {e}"));
        let plant = self.plant.load(root, base).map_err(|e| at("plant", e))?;
        let spec = self.controller.load(root, base).map_err(|e| at("controller", e))?;
        let requirement = match &self.requirement {
            Some(r) => {
                let r = r.load(root, base).map_err(|e| at("requirement", e))?;
                r.validate().map_err(|e| at("requirement", e))?;
                Some(r)
            }
            None => None,
        };
        let ts = ov.ts.or(self.ts).unwrap_or(DEFAULT_TS);
        let band_pct = ov.band.or(self.band).unwrap_or(DEFAULT_BAND_PCT);
        let reference = match (self.reference, &requirement) {
            (Some(r), _) => r,
            (None, Some(req)) => Signal::step(req.reference),
            (None, None) => return Err(Error::config(source, "reference: needed when no requirement is given")),
        };
        let duration = match (self.duration, &requirement) {
            (Some(d), _) => d,
            (None, Some(req)) => 10.0 * req.tss_max,
            (None, None) => return Err(Error::config(source, "duration: needed when no requirement is given")),
        };
        let ctx = ResolveContext {
            plant: &plant,
            requirement: requirement.as_ref(),
            limits: self.limits.unwrap_or_default(),
            ts,
            band_pct,
        };
        let controller = spec.resolve(&ctx).map_err(|e| at("controller", e))?;
        let mut scenario = Scenario::new(plant, controller, reference, duration, ts);
        scenario.disturbance = self.disturbance;
        scenario.loop_delay = self.loop_delay || ov.loop_delay;
        scenario.validate().map_err(|e| Error::config(source, e.to_string()))?;
        let name = self.name.clone().unwrap_or_else(|| {
            Path::new(source)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into())
        });
        Ok(LoadedScenario {
            name,
            scenario,
            requirement,
            band_pct,
            controller_label: spec.label().into(),
        })
    }
}

/// Loads a scenario from disk, resolving references next to it.
pub fn load_scenario(path: &Path, ov: &Overrides) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let source = path.display().to_string();
    let file = ScenarioFile::parse(&text, &source)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    file.resolve(&AssetRoot::Dir(dir), "", &source, ov)
}

/// Loads one of the compiled-in scenarios by its relative name.
pub fn load_bundled_scenario(rel: &str, ov: &Overrides) -> Result<LoadedScenario> {
    let root = AssetRoot::Bundled;
    let (text, source) = root.read("", rel)?;
    let file = ScenarioFile::parse(&text, &source)?;
    file.resolve(&root, &parent_of(rel), &source, ov)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    #[serde(default = "default_ts")]
    pub ts: f64,
    #[serde(default = "default_band")]
    pub band: f64,
    #[serde(default)]
    pub limits: Limits,
}

fn default_ts() -> f64 {
    DEFAULT_TS
}

fn default_band() -> f64 {
    DEFAULT_BAND_PCT
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            ts: DEFAULT_TS,
            band: DEFAULT_BAND_PCT,
            limits: Limits::default(),
        }
    }
}

/// One controlled loop (axis and quantity) and the controllers run on it,
/// keyed by display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopEntry {
    pub name: String,
    pub plant: String,
    pub requirement: String,
    pub controllers: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<Limits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

/// Reported step metrics for one cell group of the comparison tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportedMetrics {
    pub tss: f64,
    pub os_pct: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportedRow {
    #[serde(rename = "loop")]
    pub loop_name: String,
    pub controller: String,
    pub tracking: ReportedMetrics,
    pub disturbance: ReportedMetrics,
    pub max_control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectFile {
    #[serde(default)]
    defaults: Defaults,
    #[serde(default)]
    geometry: Option<MountGeometry>,
    plants: BTreeMap<String, Ref<TransferFunction>>,
    requirements: BTreeMap<String, Requirement>,
    controllers: BTreeMap<String, ControllerSpec>,
    #[serde(default)]
    loops: Vec<LoopEntry>,
    #[serde(default)]
    reported: Vec<ReportedRow>,
}

/// Named models, gains and requirements for the whole mount.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectConfig {
    pub source: String,
    pub defaults: Defaults,
    pub geometry: MountGeometry,
    pub plants: BTreeMap<String, TransferFunction>,
    pub requirements: BTreeMap<String, Requirement>,
    pub controllers: BTreeMap<String, ControllerSpec>,
    pub loops: Vec<LoopEntry>,
    pub reported: Vec<ReportedRow>,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::load_from(&AssetRoot::Dir(dir), &name)
    }

    /// The project file shipped with the crate.
    pub fn bundled() -> Result<Self> {
        Self::load_from(&AssetRoot::Bundled, "project.json")
    }

    pub fn load_from(root: &AssetRoot, rel: &str) -> Result<Self> {
        let (text, source) = root.read("", rel)?;
        let file: ProjectFile = parse_json(&text, &source)?;
        let base = parent_of(rel);
        let at = |field: String, msg: String| Error::config(&source, format!("{field}: {msg}"));

        let mut plants = BTreeMap::new();
        for (name, r) in &file.plants {
            let tf = r.load(root, &base).map_err(|e| at(format!("plants.{name}"), e.to_string()))?;
            plants.insert(name.clone(), tf);
        }
        for (name, r) in &file.requirements {
            r.validate().map_err(|e| at(format!("requirements.{name}"), e.to_string()))?;
        }
        file.defaults
            .limits
            .validate()
            .map_err(|e| at("defaults.limits".into(), e.to_string()))?;
        if !(file.defaults.ts > 0.0 && file.defaults.band > 0.0) {
            return Err(at("defaults".into(), "ts and band must be positive".into()));
        }
        for (name, c) in &file.controllers {
            if let Some(l) = c.limits() {
                l.validate().map_err(|e| at(format!("controllers.{name}.limits"), e.to_string()))?;
            }
        }
        for (i, lp) in file.loops.iter().enumerate() {
            let field = |f: &str| format!("loops[{i}].{f}");
            if !plants.contains_key(&lp.plant) {
                return Err(at(field("plant"), format!("unknown plant {:?}", lp.plant)));
            }
            if !file.requirements.contains_key(&lp.requirement) {
                return Err(at(field("requirement"), format!("unknown requirement {:?}", lp.requirement)));
            }
            for (label, c) in &lp.controllers {
                if !file.controllers.contains_key(c) {
                    return Err(at(field(&format!("controllers.{label}")), format!("unknown controller {c:?}")));
                }
            }
            if let Some(l) = lp.limits {
                l.validate().map_err(|e| at(field("limits"), e.to_string()))?;
            }
        }
        for (i, row) in file.reported.iter().enumerate() {
            if !file.loops.iter().any(|l| l.name == row.loop_name) {
                return Err(at(format!("reported[{i}].loop"), format!("unknown loop {:?}", row.loop_name)));
            }
        }
        Ok(ProjectConfig {
            source,
            defaults: file.defaults,
            geometry: file.geometry.unwrap_or_default(),
            plants,
            requirements: file.requirements,
            controllers: file.controllers,
            loops: file.loops,
            reported: file.reported,
        })
    }

    pub fn reported(&self, loop_name: &str, controller: &str) -> Option<&ReportedRow> {
        self.reported
            .iter()
            .find(|r| r.loop_name == loop_name && r.controller == controller)
    }
}
