//! Scenario engine: composes the array, clutter, detector, optimizer, comms
//! and agent modules into the per-pulse loop and runs it over Monte Carlo
//! repetitions.

mod engine;
mod library;
mod scenario;

pub use engine::{
    mean_and_stderr, run_episode, run_monte_carlo, run_monte_carlo_policy, synthesize_echo, Echo, Echoes,
    MonteCarloLog, PulseRecord, RunLog, SteeringTable,
};
pub use library::{
    calibrate_snr_offset, dynamic3, dynamic3_desk, scenario, scenario_library, sequential7, sequential7_desk,
    stationary4, stationary4_desk, CalibrationBeam, CALIBRATION_PD,
    DESK_BURN_IN, DESK_CODE_LENGTH, DESK_MC_RUNS, DESK_SIDE, DESK_USERS, FULL_CODE_LENGTH,
};
pub use scenario::{
    ClutterSpec, Code, CompiledSegment, CompiledTarget, Diagnostic, Diagnostics, GridSpec, RewardTargets, Scenario,
    ScenarioError, ScenarioSpec, TargetSegment, TargetSpec, SCHEMA_VERSION,
};
