//! Cognitive integrated sensing and communication with a reinforcement-learning
//! beam selector.
//!
//! A MIMO radar with colocated uniform planar arrays illuminates an angular
//! grid, detects targets in heavy-tailed AR clutter with a Wald-type CFAR
//! test, and lets a SARSA agent pick which bins to focus on. The transmit
//! waveform is shaped for the chosen beampattern and traded off against
//! multi-user interference of a downlink that shares the same signal.

pub mod agent;
pub mod array;
pub mod clutter;
pub mod comms;
pub mod detector;
pub mod optimizer;
pub mod report;
pub mod simkit;

use thiserror::Error;

/// Any failure surfaced by the engine, tagged with its module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("[array] {0}")]
    Array(#[from] array::ArrayError),
    #[error("[clutter] {0}")]
    Clutter(#[from] clutter::ClutterError),
    #[error("[detector] {0}")]
    Detector(#[from] detector::DetectorError),
    #[error("[optimizer] {0}")]
    Optimizer(#[from] optimizer::OptimizerError),
    #[error("[comms] {0}")]
    Comms(#[from] comms::CommsError),
    #[error("[agent] {0}")]
    Agent(#[from] agent::AgentError),
    #[error("[simkit] {0}")]
    Scenario(#[from] simkit::ScenarioError),
    #[error("[report] {0}")]
    Report(#[from] report::ReportError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
