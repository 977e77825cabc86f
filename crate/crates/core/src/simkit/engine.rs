//! Per-pulse perception–action loop and the Monte Carlo harness.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    act_to_covariance, nrl_action, Branch, PolicyKind, SarsaAgent, TargetSetPolicy,
};
use crate::array::{effective_channel, steering, SpatialGrid, UpaConfig};
use crate::clutter::{ChannelLayout, FieldGenerator};
use crate::comms::CommScene;
use crate::detector::{detect_frame, BinObservation, DetectionFrame};
use crate::optimizer::{orthogonal_reference, radar_reference, tradeoff_waveform, Waveform};
use crate::Error;

use super::scenario::{RewardTargets, Scenario};

const STREAM_CLUTTER: u64 = 0;
const STREAM_TARGETS: u64 = 1;
const STREAM_AGENT: u64 = 2;
const STREAM_COMM: u64 = 3;
const STREAMS: u64 = 4;

/// Independent generator for one purpose within one Monte Carlo run.
///
/// Streams depend only on `(seed, run, purpose)`, so every policy sees the
/// same clutter, target phases and downlink for a given run.
fn stream(seed: u64, run: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64 * STREAMS + purpose);
    rng
}

/// Transmit and receive steering vectors of every bin.
#[derive(Debug, Clone)]
pub struct SteeringTable {
    pub transmit: Vec<Vec<Complex64>>,
    pub receive: Vec<Vec<Complex64>>,
}

impl SteeringTable {
    pub fn new(upa: &UpaConfig, grid: &SpatialGrid) -> Self {
        let transmit = grid
            .bins()
            .iter()
            .map(|b| steering(upa.tx_x, upa.tx_y, b.nu_x, b.nu_y).into_inner())
            .collect();
        let receive = grid
            .bins()
            .iter()
            .map(|b| steering(upa.rx_x, upa.rx_y, b.nu_x, b.nu_y).into_inner())
            .collect();
        Self { transmit, receive }
    }
}

/// A target echo present at one bin for one pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Echo {
    pub bin: usize,
    pub amplitude: Complex64,
}

impl Echo {
    /// `|α|² = snr·σ_w²` with the given phase.
    pub fn new(bin: usize, snr_db: f64, sigma_w2: f64, phase: f64) -> Self {
        let mag = (10f64.powf(snr_db / 10.0) * sigma_w2).sqrt();
        Self {
            bin,
            amplitude: Complex64::from_polar(mag, phase),
        }
    }
}

/// Effective channels and received vectors of every bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Echoes {
    pub channels: Vec<Vec<Complex64>>,
    pub received: Vec<Vec<Complex64>>,
}

impl Echoes {
    pub fn observations(&self) -> Vec<BinObservation<'_>> {
        self.channels
            .iter()
            .zip(&self.received)
            .map(|(h, y)| BinObservation {
                channel: h,
                received: y,
            })
            .collect()
    }
}

/// `y_m = α_m h_m + c_m` for every bin, fresh clutter per bin.
pub fn synthesize_echo<R: Rng + ?Sized>(
    upa: &UpaConfig,
    layout: ChannelLayout,
    table: &SteeringTable,
    echoes: &[Echo],
    r: &DMatrix<Complex64>,
    clutter: &mut FieldGenerator,
    rng: &mut R,
) -> Result<Echoes, Error> {
    let m = table.transmit.len();
    let mut channels = Vec::with_capacity(m);
    let mut received = Vec::with_capacity(m);
    for bin in 0..m {
        let h = effective_channel(&table.transmit[bin], &table.receive[bin], r)?;
        let mut y = clutter.generate_channels(upa, layout, rng);
        for e in echoes.iter().filter(|e| e.bin == bin) {
            for (yi, hi) in y.iter_mut().zip(&h) {
                *yi += e.amplitude * hi;
            }
        }
        channels.push(h);
        received.push(y);
    }
    Ok(Echoes { channels, received })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub pulse: usize,
    /// Decision at each target's bin; `None` while the target is unscheduled.
    pub detections: Vec<Option<bool>>,
    /// `T_p`.
    pub count: usize,
    pub reward: f64,
    /// `j` of the action chosen for the next pulse.
    pub action: usize,
    pub branch: Branch,
    /// Bins the next covariance focuses on; empty means isotropic.
    pub beams: Vec<usize>,
    pub sum_rate: f64,
    pub normalized_sum_rate: f64,
    pub mui_energy: f64,
    /// `‖X‖_F²` of the transmitted waveform.
    pub waveform_energy: f64,
    pub floored: usize,
    pub blind: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub run: usize,
    pub policy: PolicyKind,
    pub pulses: Vec<PulseRecord>,
}

enum Controller {
    Rl(Box<SarsaAgent>),
    Nrl,
    Orthogonal,
}

/// One episode of `spec.pulses` pulses for Monte Carlo run `run`.
pub fn run_episode(scenario: &Scenario, policy: PolicyKind, run: usize) -> Result<RunLog, Error> {
    let table = SteeringTable::new(&scenario.spec.array, &scenario.grid);
    run_episode_with(scenario, &table, policy, run)
}

fn run_episode_with(
    scenario: &Scenario,
    table: &SteeringTable,
    policy: PolicyKind,
    run: usize,
) -> Result<RunLog, Error> {
    let spec = &scenario.spec;
    let upa = spec.array;
    let n_t = upa.n_t();
    let tradeoff = spec.tradeoff();
    let mut clutter = spec.clutter.field()?.generator()?;
    let mut rng_clutter = stream(spec.seed, run, STREAM_CLUTTER);
    let mut rng_targets = stream(spec.seed, run, STREAM_TARGETS);
    let mut rng_agent = stream(spec.seed, run, STREAM_AGENT);
    let mut rng_comm = stream(spec.seed, run, STREAM_COMM);

    let mut scene = CommScene::sample(spec.users, n_t, spec.code_length, spec.comm_snr_db, &mut rng_comm)?;
    let mut x: Waveform = orthogonal_reference(n_t, spec.code_length, spec.power)?;
    let mut controller = match policy {
        PolicyKind::Rl => Controller::Rl(Box::new(SarsaAgent::new(spec.agent)?)),
        PolicyKind::Nrl => Controller::Nrl,
        PolicyKind::Orthogonal => Controller::Orthogonal,
    };

    let mut records = Vec::with_capacity(spec.pulses);
    for pulse in 1..=spec.pulses {
        let comm = scene.metrics(x.matrix())?;

        let echoes: Vec<Echo> = scenario
            .targets
            .iter()
            .filter_map(|t| {
                // one phase per target and pulse, drawn even when silent
                let phase = rng_targets.random::<f64>() * std::f64::consts::TAU;
                let seg = t.at(pulse)?;
                seg.snr_db
                    .map(|snr| Echo::new(seg.bin, snr, spec.clutter.sigma_w2, phase))
            })
            .collect();
        let r = x.covariance();
        let obs = synthesize_echo(&upa, spec.clutter.layout, table, &echoes, &r, &mut clutter, &mut rng_clutter)?;
        let frame = detect_frame(&obs.observations(), &spec.detector)?;

        let (reward, selection) = match &mut controller {
            Controller::Rl(agent) => {
                let targets = match spec.reward_targets {
                    RewardTargets::Detected => TargetSetPolicy::Detected,
                    RewardTargets::Truth => TargetSetPolicy::Oracle(scenario.echo_bins(pulse)),
                };
                let step = agent.step(&frame, &targets, &mut rng_agent)?;
                (step.reward, step.selection)
            }
            Controller::Nrl => (
                crate::agent::compute_reward(&frame, &TargetSetPolicy::Detected),
                nrl_action(&frame),
            ),
            Controller::Orthogonal => (
                crate::agent::compute_reward(&frame, &TargetSetPolicy::Detected),
                crate::agent::ActionSelection {
                    j: 0,
                    bins: Vec::new(),
                    branch: Branch::Fixed,
                },
            ),
        };

        records.push(PulseRecord {
            pulse,
            detections: detections_at(scenario, pulse, &frame),
            count: frame.count,
            reward,
            action: selection.j,
            branch: selection.branch,
            beams: selection.bins.clone(),
            sum_rate: comm.sum_rate,
            normalized_sum_rate: comm.normalized_sum_rate,
            mui_energy: comm.mui_energy,
            waveform_energy: x.energy(),
            floored: frame.floored.iter().filter(|&&f| f).count(),
            blind: frame.blind.iter().filter(|&&b| b).count(),
        });

        if pulse < spec.pulses {
            let rd = act_to_covariance(&selection.bins, &upa, &scenario.grid, spec.power)?;
            scene.redraw_symbols(&mut rng_comm);
            let x0 = radar_reference(&scene.h, &scene.s, &rd)?;
            x = tradeoff_waveform(&scene.h, &scene.s, &x0, spec.power, &tradeoff)?.waveform;
        }
    }
    Ok(RunLog {
        run,
        policy,
        pulses: records,
    })
}

fn detections_at(scenario: &Scenario, pulse: usize, frame: &DetectionFrame) -> Vec<Option<bool>> {
    scenario
        .targets
        .iter()
        .map(|t| t.at(pulse).map(|s| frame.decisions[s.bin]))
        .collect()
}

/// Runs aggregated over Monte Carlo repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloLog {
    pub scenario: String,
    pub policy: PolicyKind,
    pub rho: f64,
    pub target_ids: Vec<usize>,
    /// `[pulse][target]` fraction of runs detecting the target's bin.
    pub p_detect: Vec<Vec<Option<f64>>>,
    pub mean_sum_rate: Vec<f64>,
    pub mean_normalized_sum_rate: Vec<f64>,
    pub mean_count: Vec<f64>,
    pub runs: Vec<RunLog>,
}

impl MonteCarloLog {
    /// Aggregates in run-index order, whatever the order of `runs`.
    pub fn from_runs(scenario: &Scenario, policy: PolicyKind, mut runs: Vec<RunLog>) -> Self {
        runs.sort_by_key(|r| r.run);
        let p = scenario.spec.pulses;
        let n = runs.len() as f64;
        let n_targets = scenario.targets.len();
        let mut hits = vec![vec![(0usize, 0usize); n_targets]; p];
        let mut sum_rate = vec![0.0; p];
        let mut norm_rate = vec![0.0; p];
        let mut count = vec![0.0; p];
        for run in &runs {
            for (i, rec) in run.pulses.iter().enumerate() {
                for (t, d) in rec.detections.iter().enumerate() {
                    if let Some(d) = d {
                        hits[i][t].0 += usize::from(*d);
                        hits[i][t].1 += 1;
                    }
                }
                sum_rate[i] += rec.sum_rate;
                norm_rate[i] += rec.normalized_sum_rate;
                count[i] += rec.count as f64;
            }
        }
        let p_detect = hits
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&(h, total)| (total > 0).then(|| h as f64 / total as f64))
                    .collect()
            })
            .collect();
        Self {
            scenario: scenario.spec.name.clone(),
            policy,
            rho: scenario.spec.rho,
            target_ids: scenario.targets.iter().map(|t| t.id).collect(),
            p_detect,
            mean_sum_rate: sum_rate.into_iter().map(|v| v / n).collect(),
            mean_normalized_sum_rate: norm_rate.into_iter().map(|v| v / n).collect(),
            mean_count: count.into_iter().map(|v| v / n).collect(),
            runs,
        }
    }

    pub fn pulses(&self) -> usize {
        self.mean_sum_rate.len()
    }

    /// Mean detection probability of target `t` over pulses `first..=last`.
    pub fn window_pd(&self, t: usize, first: usize, last: usize) -> Option<f64> {
        let vals: Vec<f64> = (first..=last)
            .filter_map(|p| self.p_detect.get(p - 1).and_then(|row| row[t]))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// First pulse at which target `t`'s detection probability reaches `level`.
    pub fn first_crossing(&self, t: usize, level: f64) -> Option<usize> {
        self.p_detect
            .iter()
            .position(|row| row[t].is_some_and(|v| v >= level))
            .map(|i| i + 1)
    }

    /// Mean over runs of each run's window average of `metric`, with the
    /// standard error of that mean.
    pub fn window_stat(&self, first: usize, last: usize, metric: impl Fn(&PulseRecord) -> f64) -> (f64, f64) {
        let per_run: Vec<f64> = self
            .runs
            .iter()
            .map(|r| {
                let w = &r.pulses[first - 1..last];
                w.iter().map(&metric).sum::<f64>() / w.len() as f64
            })
            .collect();
        mean_and_stderr(&per_run)
    }
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// All `spec.mc_runs` runs of `policy`, in parallel; the result does not
/// depend on scheduling or thread count.
pub fn run_monte_carlo_policy(scenario: &Scenario, policy: PolicyKind) -> Result<MonteCarloLog, Error> {
    let table = SteeringTable::new(&scenario.spec.array, &scenario.grid);
    let runs = (0..scenario.spec.mc_runs)
        .into_par_iter()
        .map(|run| run_episode_with(scenario, &table, policy, run))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MonteCarloLog::from_runs(scenario, policy, runs))
}

/// Monte Carlo with the scenario's own policy.
pub fn run_monte_carlo(scenario: &Scenario) -> Result<MonteCarloLog, Error> {
    run_monte_carlo_policy(scenario, scenario.spec.policy)
}
