//! Built-in scenarios and the SNR calibration used by the desk variants.

use crate::agent::{beam_vectors, AgentParams, PolicyKind};
use crate::array::{effective_channel, steering, UpaConfig};
use crate::clutter::{ArAutocovariance, ArCoefficients, ChannelLayout, DEFAULT_BURN_IN};
use crate::detector::{asymptotic_pd, noncentrality, DetectorConfig};
use crate::optimizer::{design_covariance, TransmitCovariance};
use crate::Error;

use super::scenario::{
    ClutterSpec, GridSpec, RewardTargets, ScenarioError, ScenarioSpec, TargetSegment, TargetSpec, SCHEMA_VERSION,
};

/// Burn-in of the desk variants; the transient left in the field is about
/// 1e-8 of its variance at this depth.
pub const DESK_BURN_IN: usize = 8;

/// Desk array side (`4 × 4` panels, `N_t = N_r = 16`).
pub const DESK_SIDE: usize = 4;

/// Downlink users of the desk variants.
pub const DESK_USERS: usize = 8;

pub const DESK_MC_RUNS: usize = 200;

/// Target P_D the desk calibration aims for at the focused beampattern.
pub const CALIBRATION_PD: f64 = 0.9;

// Offsets from `calibrate_snr_offset`, rounded up to whole dB: focused beams
// for the stationary and dynamic scenes, isotropic for the sequential one,
// whose seven targets cannot share one rank-one beam.
const STATIONARY4_DESK_OFFSET_DB: f64 = 24.0;
const DYNAMIC3_DESK_OFFSET_DB: f64 = 25.0;
const SEQUENTIAL7_DESK_OFFSET_DB: f64 = 33.0;

fn segment(start: usize, end: usize, (nu_x, nu_y): (f64, f64), snr_db: f64) -> TargetSegment {
    TargetSegment {
        start,
        end,
        nu_x,
        nu_y,
        snr_db: Some(snr_db),
    }
}

fn target(id: usize, schedule: Vec<TargetSegment>) -> TargetSpec {
    TargetSpec { id, schedule }
}

/// Code length of the desk variants.
pub const DESK_CODE_LENGTH: usize = 30;

/// Full-scale code length; the waveform solvers need `N_t ≤ L`, so it
/// matches the 100 transmit antennas.
pub const FULL_CODE_LENGTH: usize = 100;

/// Full-scale settings shared by every scenario.
fn base(name: &str, description: &str, pulses: usize, targets: Vec<TargetSpec>) -> ScenarioSpec {
    ScenarioSpec {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        description: description.to_string(),
        pulses,
        mc_runs: 1000,
        seed: 1,
        policy: PolicyKind::Rl,
        rho: 0.2,
        users: 48,
        comm_snr_db: 12.0,
        code_length: FULL_CODE_LENGTH,
        power: 1.0,
        snr_offset_db: 0.0,
        reward_targets: RewardTargets::Detected,
        array: UpaConfig::square(10, 10).expect("nonzero panel"),
        grid: GridSpec { l_x: 11, l_y: 11 },
        detector: DetectorConfig::default(),
        clutter: ClutterSpec {
            coefficients: ArCoefficients::reference().rows().to_vec(),
            mu: 2.0,
            sigma_w2: 1.0,
            burn_in: DEFAULT_BURN_IN,
            layout: ChannelLayout::Line,
        },
        agent: AgentParams::default(),
        targets,
    }
}

/// Mutually orthogonal beams of a 4x4 panel on the 11x11 grid: every pair
/// differs by 0.5 along at least one axis.
const DESK_RESOLVABLE: [(f64, f64); 4] = [(-0.4, -0.4), (0.1, 0.1), (0.1, -0.4), (-0.4, 0.1)];

/// Moves target `id` to `pos` in every segment.
fn relocate(spec: &mut ScenarioSpec, id: usize, pos: (f64, f64)) {
    for t in spec.targets.iter_mut().filter(|t| t.id == id) {
        for s in &mut t.schedule {
            (s.nu_x, s.nu_y) = pos;
        }
    }
}

fn desk(mut spec: ScenarioSpec, offset_db: f64) -> ScenarioSpec {
    spec.name = format!("{}-desk", spec.name);
    spec.description = format!("{} (4x4 panels, K = {DESK_USERS})", spec.description);
    spec.array = UpaConfig::square(DESK_SIDE, DESK_SIDE).expect("nonzero panel");
    spec.users = DESK_USERS;
    spec.code_length = DESK_CODE_LENGTH;
    spec.mc_runs = DESK_MC_RUNS;
    spec.clutter.burn_in = DESK_BURN_IN;
    spec.snr_offset_db = offset_db;
    spec
}

pub fn stationary4() -> ScenarioSpec {
    let p = 50;
    base(
        "stationary4",
        "four stationary targets between -30 and -15 dB",
        p,
        vec![
            target(1, vec![segment(1, p, (-0.4, -0.4), -30.0)]),
            target(2, vec![segment(1, p, (0.0, 0.0), -25.0)]),
            target(3, vec![segment(1, p, (0.3, 0.1), -20.0)]),
            target(4, vec![segment(1, p, (-0.1, 0.4), -15.0)]),
        ],
    )
}

pub fn dynamic3() -> ScenarioSpec {
    let t1 = (-0.4, -0.4);
    base(
        "dynamic3",
        "target 1 fades after pulse 100, target 2 hands over to target 3 at pulse 51",
        140,
        vec![
            target(
                1,
                vec![
                    segment(1, 100, t1, -30.0),
                    segment(101, 110, t1, -31.0),
                    segment(111, 120, t1, -32.0),
                    segment(121, 130, t1, -33.0),
                    segment(131, 140, t1, -34.0),
                ],
            ),
            target(2, vec![segment(1, 50, (0.0, 0.0), -25.0)]),
            target(3, vec![segment(51, 140, (0.3, 0.1), -30.0)]),
        ],
    )
}

/// Positions of the sequentially appearing targets.
const SEQUENTIAL_POSITIONS: [(f64, f64); 7] = [
    (-0.4, -0.4),
    (0.1, 0.1),
    (0.1, -0.4),
    (-0.4, 0.1),
    (-0.1, -0.1),
    (0.4, 0.4),
    (0.4, -0.2),
];

pub fn sequential7() -> ScenarioSpec {
    let p = 140;
    let targets = SEQUENTIAL_POSITIONS
        .iter()
        .enumerate()
        .map(|(k, &pos)| target(k + 1, vec![segment(20 * k + 1, p, pos, -20.0)]))
        .collect();
    base(
        "sequential7",
        "a new -20 dB target every 20 pulses, seven after pulse 120",
        p,
        targets,
    )
}

/// `stationary4` on 4x4 panels with targets 2-4 moved onto resolvable beams.
pub fn stationary4_desk() -> ScenarioSpec {
    let mut spec = desk(stationary4(), STATIONARY4_DESK_OFFSET_DB);
    for (id, &pos) in (1..=4).zip(&DESK_RESOLVABLE) {
        relocate(&mut spec, id, pos);
    }
    spec
}

/// `dynamic3` on 4x4 panels with targets 2 and 3 moved onto resolvable beams.
pub fn dynamic3_desk() -> ScenarioSpec {
    let mut spec = desk(dynamic3(), DYNAMIC3_DESK_OFFSET_DB);
    for (id, &pos) in (1..=3).zip(&DESK_RESOLVABLE) {
        relocate(&mut spec, id, pos);
    }
    spec
}

pub fn sequential7_desk() -> ScenarioSpec {
    desk(sequential7(), SEQUENTIAL7_DESK_OFFSET_DB)
}

/// Every built-in scenario, full-scale first.
pub fn scenario_library() -> Vec<ScenarioSpec> {
    vec![
        stationary4(),
        dynamic3(),
        sequential7(),
        stationary4_desk(),
        dynamic3_desk(),
        sequential7_desk(),
    ]
}

pub fn scenario(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    scenario_library()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ScenarioError::Unknown(name.to_string()))
}

/// Largest clutter lag kept when evaluating `h^H Γ h` for calibration.
const CALIBRATION_MAX_LAG: usize = 40;

/// Transmit covariance the calibration evaluates targets under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationBeam {
    /// Focused on every target present.
    Focused,
    Isotropic,
}

/// SNR increase (dB) that lifts the weakest target present at the last pulse
/// to `Q₁(√κ, √η) = CALIBRATION_PD`. `κ` is evaluated on the exact clutter
/// covariance under `beam`; the weakest target is the one with the smallest
/// `κ`.
///
/// Offsets already in `spec` are ignored; a negative result means the
/// scenario is above the calibration point as is.
pub fn calibrate_snr_offset(spec: &ScenarioSpec, beam: CalibrationBeam) -> Result<f64, Error> {
    let mut base = spec.clone();
    base.snr_offset_db = 0.0;
    let scenario = base.compile()?;
    let last = base.pulses;
    let present: Vec<(usize, f64)> = scenario
        .targets
        .iter()
        .filter_map(|t| t.at(last).and_then(|s| s.snr_db.map(|snr| (s.bin, snr))))
        .collect();
    if present.is_empty() {
        return Ok(0.0);
    }
    let bins: Vec<usize> = present.iter().map(|p| p.0).collect();
    let upa = base.array;
    let r = match beam {
        CalibrationBeam::Focused => design_covariance(&beam_vectors(&bins, &upa, &scenario.grid)?, base.power)?.0,
        CalibrationBeam::Isotropic => TransmitCovariance::isotropic(upa.n_t(), base.power)?,
    };
    let coeffs = ArCoefficients::new(base.clutter.coefficients.clone())?;
    let gamma = ArAutocovariance::new(&coeffs, base.clutter.sigma_w2, CALIBRATION_MAX_LAG)?;
    let mut kappa0 = f64::INFINITY;
    for &(b, snr) in &present {
        let bin = scenario.grid.bin(b)?;
        let a_t = steering(upa.tx_x, upa.tx_y, bin.nu_x, bin.nu_y);
        let a_r = steering(upa.rx_x, upa.rx_y, bin.nu_x, bin.nu_y);
        let h = effective_channel(a_t.as_slice(), a_r.as_slice(), r.matrix())?;
        let quad = gamma.quadratic_form(&h, &upa, base.clutter.layout);
        let alpha = (10f64.powf(snr / 10.0) * base.clutter.sigma_w2).sqrt();
        kappa0 = kappa0.min(noncentrality(num_complex::Complex64::new(alpha, 0.0), &h, quad));
    }
    let eta = base.detector.threshold()?;

    // Q₁(√κ, √η) increases in κ; bisect for the calibration point.
    let (mut lo, mut hi) = (0.0, eta.max(1.0));
    while asymptotic_pd(hi, eta) < CALIBRATION_PD {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if asymptotic_pd(mid, eta) < CALIBRATION_PD {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(10.0 * (hi / kappa0).log10())
}
