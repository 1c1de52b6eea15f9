//! Scenario files: TOML documents describing one run or a sweep.
//!
//! ```toml
//! output_prefix = "out/orbit"
//! emit = ["trajectory_csv", "metrics_json"]
//!
//! [target]
//! x = 0.0
//! y = -10.0
//!
//! [initial_state]
//! x = 13.0
//! y = -2.0
//! psi = 3.9269908169872414
//!
//! [guidance]
//! r_d = 10.0
//! k = 0.2
//! speed = 1.0
//!
//! [simulation]          # optional
//! step_size = 1e-3
//! duration = 300.0
//!
//! [sweep]               # optional, dotted paths to numeric fields
//! "initial_state.psi" = [0.0, 1.5707963267948966]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::analysis::DEFAULT_SETTLING_BAND;
use crate::dynamics::{SimConfig, DEFAULT_EVENT_TOLERANCE, DEFAULT_STEP};
use crate::estimator::{EstimatorParams, ResetRadiusMode};
use crate::geometry::{CartesianState, TargetPosition};
use crate::guidance::{self, ControllerMode, GuidanceError, GuidanceParams, ValidationReport};

pub const DEFAULT_DURATION: f64 = 300.0;

const SEC5_FULL_INFO: &str = include_str!("../scenarios/sec5_full_info.toml");
const SEC5_OUTPUT_FEEDBACK: &str = include_str!("../scenarios/sec5_output_feedback.toml");

/// Names and sources of the scenarios compiled into the crate.
pub const BUNDLED: [(&str, &str); 2] = [
    ("sec5_full_info", SEC5_FULL_INFO),
    ("sec5_output_feedback", SEC5_OUTPUT_FEEDBACK),
];

/// Numeric fields a sweep may vary.
pub const SWEEPABLE: [&str; 15] = [
    "target.x",
    "target.y",
    "initial_state.x",
    "initial_state.y",
    "initial_state.psi",
    "guidance.r_d",
    "guidance.k",
    "guidance.speed",
    "estimator.k1",
    "estimator.k2",
    "estimator.k3",
    "simulation.step_size",
    "simulation.duration",
    "simulation.event_tolerance",
    "settling_band",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Gain(#[from] GuidanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    TrajectoryCsv,
    EventsCsv,
    MetricsJson,
    LyapunovCsv,
    CertificateJson,
}

impl Artifact {
    pub fn file_suffix(&self) -> &'static str {
        match self {
            Artifact::TrajectoryCsv => "trajectory.csv",
            Artifact::EventsCsv => "events.csv",
            Artifact::MetricsJson => "metrics.json",
            Artifact::LyapunovCsv => "lyapunov.csv",
            Artifact::CertificateJson => "certificate.json",
        }
    }
}

// Raw document shape. Everything optional so that all missing fields can be
// reported together.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    x: Option<f64>,
    y: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    x: Option<f64>,
    y: Option<f64>,
    psi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGuidance {
    r_d: Option<f64>,
    k: Option<f64>,
    speed: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    k1: Option<f64>,
    k2: Option<f64>,
    k3: Option<f64>,
    reset_radius_mode: Option<ResetRadiusMode>,
    initial: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    step_size: Option<f64>,
    duration: Option<f64>,
    event_tolerance: Option<f64>,
    controller_mode: Option<ControllerMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    output_prefix: Option<String>,
    #[serde(default)]
    emit: Vec<Artifact>,
    settling_band: Option<f64>,
    target: Option<RawPoint>,
    initial_state: Option<RawState>,
    guidance: Option<RawGuidance>,
    estimator: Option<RawEstimator>,
    simulation: Option<RawSimulation>,
    sweep: Option<Table>,
}

/// Guidance values as written; they may violate the gain conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceValues {
    pub r_d: f64,
    pub k: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<f64>,
}

/// A validated scenario. The guidance gains are kept raw; [`Scenario::sim_config`]
/// fails when they do not define a controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub output_prefix: PathBuf,
    pub emit: BTreeSet<Artifact>,
    pub settling_band: f64,
    pub target: TargetPosition,
    pub initial_state: CartesianState,
    pub guidance: GuidanceValues,
    pub estimator: Option<EstimatorParams>,
    pub estimator_initial: Option<[f64; 2]>,
    pub step_size: f64,
    pub duration: f64,
    pub event_tolerance: f64,
    pub controller_mode: ControllerMode,
    pub sweep: Vec<SweepAxis>,
    /// Parsed document, kept so sweeps can rewrite fields and revalidate.
    document: Table,
}

impl Scenario {
    pub fn gain_report(&self) -> ValidationReport {
        let g = self.guidance;
        guidance::validate_gains(g.r_d, g.k, g.speed, self.estimator.as_ref(), self.controller_mode)
    }

    pub fn sim_config(&self) -> Result<SimConfig, ScenarioError> {
        let g = self.guidance;
        Ok(SimConfig {
            target: self.target,
            initial_state: self.initial_state,
            guidance: GuidanceParams::new(g.r_d, g.k, g.speed)?,
            estimator: self.estimator,
            estimator_initial: self.estimator_initial,
            step_size: self.step_size,
            duration: self.duration,
            event_tolerance: self.event_tolerance,
            controller_mode: self.controller_mode,
        })
    }

    /// Overrides a numeric field by dotted path and revalidates.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Scenario, ScenarioError> {
        self.with_values(&[(path, value)])
    }

    pub fn with_values(&self, overrides: &[(&str, f64)]) -> Result<Scenario, ScenarioError> {
        let mut doc = self.document.clone();
        doc.remove("sweep");
        for (path, value) in overrides {
            set_path(&mut doc, path, *value)?;
        }
        let mut out = from_table(doc, &self.name)?;
        out.sweep.clone_from(&self.sweep);
        Ok(out)
    }

    /// Applies a reset-radius mode to the estimator, if any.
    pub fn with_reset_mode(mut self, mode: ResetRadiusMode) -> Scenario {
        if let Some(est) = self.estimator.as_mut() {
            est.reset_radius_mode = mode;
            if let Some(Value::Table(t)) = self.document.get_mut("estimator") {
                let name = match mode {
                    ResetRadiusMode::DesiredRadius => "desired_radius",
                    ResetRadiusMode::AimRadius => "aim_radius",
                };
                t.insert("reset_radius_mode".into(), Value::String(name.into()));
            }
        }
        self
    }

    /// Every grid point as `(index, overrides)`, last axis varying fastest.
    pub fn grid(&self) -> Vec<Vec<(String, f64)>> {
        let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.path.clone(), v));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

fn set_path(doc: &mut Table, path: &str, value: f64) -> Result<(), ScenarioError> {
    if !SWEEPABLE.contains(&path) {
        return Err(ScenarioError::Validation(vec![format!(
            "unknown numeric field '{path}'"
        )]));
    }
    let mut table = doc;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            table.insert(part.into(), Value::Float(value));
            break;
        }
        let entry = table
            .entry(part)
            .or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(ScenarioError::Validation(vec![format!(
                    "'{part}' in '{path}' is not a table"
                )]))
            }
        };
    }
    Ok(())
}

/// Parses scenario text. `source_name` labels diagnostics.
pub fn parse_scenario(text: &str, source_name: &str) -> Result<Scenario, ScenarioError> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse {
        source_name: source_name.into(),
        message: with_line(text, &e),
    })?;
    from_table(doc, source_name)
}

fn with_line(text: &str, e: &toml::de::Error) -> String {
    let message = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {message}")
        }
        None => message,
    }
}

fn from_table(doc: Table, source_name: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = doc
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| ScenarioError::Parse {
            source_name: source_name.into(),
            message: e.message().trim().to_string(),
        })?;

    let mut problems = Vec::new();
    let mut need = |v: Option<f64>, name: &str| -> f64 {
        match v {
            Some(v) if v.is_finite() => v,
            Some(v) => {
                problems.push(format!("{name} must be finite (got {v})"));
                f64::NAN
            }
            None => {
                problems.push(format!("missing field {name}"));
                f64::NAN
            }
        }
    };
    let target = raw.target.unwrap_or_default();
    let target = TargetPosition::new(need(target.x, "target.x"), need(target.y, "target.y"));
    let s = raw.initial_state.unwrap_or_default();
    let initial_state = CartesianState::new(
        need(s.x, "initial_state.x"),
        need(s.y, "initial_state.y"),
        need(s.psi, "initial_state.psi"),
    );
    let g = raw.guidance.unwrap_or_default();
    let guidance = GuidanceValues {
        r_d: need(g.r_d, "guidance.r_d"),
        k: need(g.k, "guidance.k"),
        speed: need(g.speed, "guidance.speed"),
    };
    let (estimator, estimator_initial) = match raw.estimator {
        None => (None, None),
        Some(e) => (
            Some(EstimatorParams {
                k1: need(e.k1, "estimator.k1"),
                k2: need(e.k2, "estimator.k2"),
                k3: need(e.k3, "estimator.k3"),
                reset_radius_mode: e.reset_radius_mode.unwrap_or_default(),
            }),
            e.initial,
        ),
    };
    let sim = raw.simulation.unwrap_or_default();
    let controller_mode = sim.controller_mode.unwrap_or(if estimator.is_some() {
        ControllerMode::OutputFeedback
    } else {
        ControllerMode::FullInformation
    });

    let positive = [
        ("guidance.r_d", guidance.r_d),
        ("guidance.speed", guidance.speed),
    ];
    let step_size = sim.step_size.unwrap_or(DEFAULT_STEP);
    let duration = sim.duration.unwrap_or(DEFAULT_DURATION);
    let event_tolerance = sim.event_tolerance.unwrap_or(DEFAULT_EVENT_TOLERANCE);
    let settling_band = raw.settling_band.unwrap_or(DEFAULT_SETTLING_BAND);
    for (name, v) in positive.into_iter().chain([
        ("simulation.step_size", step_size),
        ("simulation.duration", duration),
        ("simulation.event_tolerance", event_tolerance),
        ("settling_band", settling_band),
    ]) {
        if !v.is_nan() && !(v.is_finite() && v > 0.0) {
            problems.push(format!("{name} must be positive (got {v})"));
        }
    }
    if controller_mode == ControllerMode::OutputFeedback && estimator.is_none() {
        problems.push("simulation.controller_mode = output_feedback needs an [estimator] section".into());
    }

    let mut sweep = Vec::new();
    if let Some(grid) = raw.sweep {
        if grid.is_empty() {
            problems.push("sweep grid is empty".into());
        }
        for (path, values) in grid {
            if !SWEEPABLE.contains(&path.as_str()) {
                problems.push(format!("sweep references unknown numeric field '{path}'"));
                continue;
            }
            let nums: Option<Vec<f64>> = values.as_array().map(|a| {
                a.iter()
                    .filter_map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                    .collect()
            });
            match nums {
                Some(n) if !n.is_empty() && n.len() == values.as_array().unwrap().len() => {
                    sweep.push(SweepAxis { path, values: n })
                }
                Some(n) if n.is_empty() && values.as_array().unwrap().is_empty() => {
                    problems.push(format!("sweep axis '{path}' is empty"))
                }
                _ => problems.push(format!("sweep axis '{path}' must be an array of numbers")),
            }
        }
    }

    if !problems.is_empty() {
        return Err(ScenarioError::Validation(problems));
    }
    let name = raw.name.unwrap_or_else(|| {
        Path::new(source_name)
            .file_stem()
            .map_or_else(|| source_name.to_string(), |s| s.to_string_lossy().into_owned())
    });
    Ok(Scenario {
        output_prefix: raw
            .output_prefix
            .map_or_else(|| PathBuf::from(&name), PathBuf::from),
        name,
        emit: raw.emit.into_iter().collect(),
        settling_band,
        target,
        initial_state,
        guidance,
        estimator,
        estimator_initial,
        step_size,
        duration,
        event_tolerance,
        controller_mode,
        sweep,
        document: doc,
    })
}

/// Loads a scenario from a file, or a bundled scenario by name.
pub fn load_scenario(path_or_name: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(path_or_name);
    if !path.exists() {
        if let Some((name, text)) = BUNDLED.iter().find(|(n, _)| *n == path_or_name) {
            return parse_scenario(text, name);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_scenario(&text, path_or_name)
}

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .and_then(|(n, text)| parse_scenario(text, n).ok())
}
