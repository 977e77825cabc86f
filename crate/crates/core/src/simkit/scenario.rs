//! Declarative scenario documents and their validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentParams, PolicyKind};
use crate::array::{make_grid, SpatialGrid, UpaConfig};
use crate::clutter::{ArCoefficients, ChannelLayout, ClutterField, StudentTNoise};
use crate::detector::DetectorConfig;
use crate::optimizer::TradeoffConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Grid points kept when matching a target position to a bin.
const ON_GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("could not parse scenario: {0}")]
    Parse(String),
    #[error("scenario '{name}' is invalid:\n{diagnostics}")]
    Invalid { name: String, diagnostics: Diagnostics },
    #[error("unknown scenario '{0}'")]
    Unknown(String),
    #[error("override {field}: {message}")]
    Override { field: String, message: String },
}

/// Stable diagnostic codes reported by [`ScenarioSpec::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Code {
    /// Unsupported `schema_version`.
    S001,
    /// Document does not parse against the schema.
    S002,
    /// Zero pulses or Monte Carlo runs.
    S003,
    /// Array or grid shape.
    S004,
    /// Target position off the grid.
    T001,
    /// Empty, reversed or overlapping schedule interval.
    T002,
    /// Duplicate target id.
    T003,
    /// Interval beyond the observation period.
    T004,
    /// Non-finite target SNR.
    T005,
    /// AR recursion unstable.
    C001,
    /// Driving-noise parameters.
    C002,
    /// More users than transmit antennas.
    M001,
    /// Code length (at least `N_t`), power or communication SNR.
    M002,
    /// Trade-off weight outside `[0, 1]`.
    O001,
    /// Detector configuration.
    D001,
    /// Agent parameters.
    A001,
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: Code,
    /// Dotted field path, e.g. `targets[2].schedule[0]`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.code, self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub l_x: usize,
    pub l_y: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterSpec {
    pub coefficients: Vec<Vec<f64>>,
    pub mu: f64,
    pub sigma_w2: f64,
    pub burn_in: usize,
    #[serde(default)]
    pub layout: ChannelLayout,
}

impl ClutterSpec {
    pub fn field(&self) -> Result<ClutterField, crate::clutter::ClutterError> {
        ClutterField::new(
            ArCoefficients::new(self.coefficients.clone())?,
            StudentTNoise::new(self.mu, self.sigma_w2)?,
            self.burn_in,
        )
    }
}

/// One interval of a target's schedule, pulses counted from 1 and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSegment {
    pub start: usize,
    pub end: usize,
    pub nu_x: f64,
    pub nu_y: f64,
    /// Absent: the bin is tracked but returns no echo.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

impl TargetSegment {
    pub fn covers(&self, pulse: usize) -> bool {
        self.start <= pulse && pulse <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub id: usize,
    pub schedule: Vec<TargetSegment>,
}

impl TargetSpec {
    pub fn segment_at(&self, pulse: usize) -> Option<&TargetSegment> {
        self.schedule.iter().find(|s| s.covers(pulse))
    }
}

/// Which bins the reward treats as targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardTargets {
    #[default]
    Detected,
    /// Bins of the targets present at the pulse.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub pulses: usize,
    pub mc_runs: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub rho: f64,
    /// Downlink users `K`.
    pub users: usize,
    pub comm_snr_db: f64,
    /// Code length `L`.
    pub code_length: usize,
    /// Transmit power `P_T`.
    pub power: f64,
    /// Added to every target SNR.
    #[serde(default)]
    pub snr_offset_db: f64,
    #[serde(default)]
    pub reward_targets: RewardTargets,
    pub array: UpaConfig,
    pub grid: GridSpec,
    pub detector: DetectorConfig,
    pub clutter: ClutterSpec,
    pub agent: AgentParams,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario specs always serialize")
    }

    pub fn tradeoff(&self) -> TradeoffConfig {
        TradeoffConfig {
            rho: self.rho,
            ..TradeoffConfig::new(0.0).expect("zero weight is valid")
        }
    }

    /// Every violation found, in document order; empty means clean.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |code: Code, path: &str, message: String| {
            out.push(Diagnostic {
                code,
                path: path.to_string(),
                message,
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            push(
                Code::S001,
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            );
        }
        if self.pulses == 0 {
            push(Code::S003, "pulses", "must be at least 1".into());
        }
        if self.mc_runs == 0 {
            push(Code::S003, "mc_runs", "must be at least 1".into());
        }
        if let Err(e) = self.array.validate() {
            push(Code::S004, "array", e.to_string());
        }
        let grid = match make_grid(self.grid.l_x, self.grid.l_y) {
            Ok(g) => Some(g),
            Err(e) => {
                push(Code::S004, "grid", e.to_string());
                None
            }
        };
        if !(0.0..=1.0).contains(&self.rho) {
            push(Code::O001, "rho", format!("{} is outside [0, 1]", self.rho));
        }
        if self.users == 0 {
            push(Code::M001, "users", "at least one user is required".into());
        } else if self.array.validate().is_ok() && self.users > self.array.n_t() {
            push(
                Code::M001,
                "users",
                format!("{} users exceed {} transmit antennas", self.users, self.array.n_t()),
            );
        }
        if self.code_length == 0 {
            push(Code::M002, "code_length", "must be at least 1".into());
        } else if self.array.validate().is_ok() && self.code_length < self.array.n_t() {
            push(
                Code::M002,
                "code_length",
                format!("{} is shorter than {} transmit antennas", self.code_length, self.array.n_t()),
            );
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            push(Code::M002, "power", format!("{} is not a positive power", self.power));
        }
        if !self.comm_snr_db.is_finite() {
            push(Code::M002, "comm_snr_db", "must be finite".into());
        }
        if !self.snr_offset_db.is_finite() {
            push(Code::T005, "snr_offset_db", "must be finite".into());
        }
        if let Err(e) = self.detector.validate() {
            push(Code::D001, "detector", e.to_string());
        }
        if let Err(e) = self.agent.validate() {
            push(Code::A001, "agent", e.to_string());
        }
        match ArCoefficients::new(self.clutter.coefficients.clone()) {
            Ok(c) => {
                if let Err(e) = c.check_stability() {
                    push(Code::C001, "clutter.coefficients", e.to_string());
                }
            }
            Err(e) => push(Code::C001, "clutter.coefficients", e.to_string()),
        }
        if let Err(e) = StudentTNoise::new(self.clutter.mu, self.clutter.sigma_w2) {
            push(Code::C002, "clutter", e.to_string());
        }

        let mut seen = Vec::new();
        for (ti, t) in self.targets.iter().enumerate() {
            let base = format!("targets[{ti}]");
            if seen.contains(&t.id) {
                push(Code::T003, &format!("{base}.id"), format!("id {} is used twice", t.id));
            }
            seen.push(t.id);
            for (si, s) in t.schedule.iter().enumerate() {
                let path = format!("{base}.schedule[{si}]");
                if s.start == 0 || s.end < s.start {
                    push(Code::T002, &path, format!("interval [{}, {}] is empty or reversed", s.start, s.end));
                } else if s.end > self.pulses {
                    push(
                        Code::T004,
                        &path,
                        format!("interval ends at {} beyond {} pulses", s.end, self.pulses),
                    );
                }
                for (sj, other) in t.schedule.iter().enumerate().take(si) {
                    if s.start <= other.end && other.start <= s.end {
                        push(Code::T002, &path, format!("overlaps schedule[{sj}]"));
                    }
                }
                if let Some(g) = &grid {
                    if g.locate(s.nu_x, s.nu_y, ON_GRID_TOLERANCE).is_none() {
                        push(
                            Code::T001,
                            &path,
                            format!("({}, {}) is not on the {}x{} grid", s.nu_x, s.nu_y, self.grid.l_x, self.grid.l_y),
                        );
                    }
                }
                if let Some(snr) = s.snr_db {
                    if !snr.is_finite() {
                        push(Code::T005, &path, format!("snr_db {snr} is not finite"));
                    }
                }
            }
        }
        out
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        let d = self.validate();
        if d.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid {
                name: self.name.clone(),
                diagnostics: Diagnostics(d),
            })
        }
    }

    /// Resolves positions to bins; the spec must be valid.
    pub fn compile(&self) -> Result<Scenario, ScenarioError> {
        self.check()?;
        let grid = make_grid(self.grid.l_x, self.grid.l_y).expect("validated grid");
        let targets = self
            .targets
            .iter()
            .map(|t| CompiledTarget {
                id: t.id,
                segments: t
                    .schedule
                    .iter()
                    .map(|s| CompiledSegment {
                        start: s.start,
                        end: s.end,
                        bin: grid.locate(s.nu_x, s.nu_y, ON_GRID_TOLERANCE).expect("validated position"),
                        snr_db: s.snr_db.map(|v| v + self.snr_offset_db),
                    })
                    .collect(),
            })
            .collect();
        Ok(Scenario {
            spec: self.clone(),
            grid,
            targets,
        })
    }

    /// Shortens or extends the observation period, clipping schedules to it.
    pub fn set_pulses(&mut self, pulses: usize) {
        self.pulses = pulses;
        for t in &mut self.targets {
            t.schedule.retain(|s| s.start <= pulses);
            for s in &mut t.schedule {
                s.end = s.end.min(pulses);
            }
        }
    }

    /// Number of targets whose schedule covers `pulse`.
    pub fn targets_at(&self, pulse: usize) -> usize {
        self.targets.iter().filter(|t| t.segment_at(pulse).is_some()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompiledSegment {
    pub start: usize,
    pub end: usize,
    pub bin: usize,
    /// Offset already applied.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledTarget {
    pub id: usize,
    pub segments: Vec<CompiledSegment>,
}

impl CompiledTarget {
    pub fn at(&self, pulse: usize) -> Option<&CompiledSegment> {
        self.segments.iter().find(|s| s.start <= pulse && pulse <= s.end)
    }
}

/// A validated scenario with target positions resolved to bin indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub grid: SpatialGrid,
    pub targets: Vec<CompiledTarget>,
}

impl Scenario {
    /// Bins carrying an echo at `pulse`.
    pub fn echo_bins(&self, pulse: usize) -> Vec<usize> {
        self.targets
            .iter()
            .filter_map(|t| t.at(pulse).filter(|s| s.snr_db.is_some()).map(|s| s.bin))
            .collect()
    }
}
