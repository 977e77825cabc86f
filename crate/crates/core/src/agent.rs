//! SARSA beam-selection agent and the two non-learning baselines.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{steering, SpatialGrid, UpaConfig};
use crate::detector::DetectionFrame;
use crate::optimizer::{design_covariance, OptimizerError, TransmitCovariance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("{name} must lie in [0, 1], got {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("state {state} outside 1..={max}")]
    State { state: usize, max: usize },
    #[error("action {action} outside 0..={max}")]
    Action { action: usize, max: usize },
    #[error("bin {0} is not on the grid")]
    Bin(usize),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: f64,
    /// Largest tracked detection count `T̃`.
    pub max_targets: usize,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.8,
            discount: 0.8,
            epsilon: 0.5,
            max_targets: 10,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        for (name, value) in [
            ("learning_rate", self.learning_rate),
            ("discount", self.discount),
            ("epsilon", self.epsilon),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(AgentError::Parameter { name, value });
            }
        }
        Ok(())
    }
}

/// `(T̃+1) × (T̃+1)` action values; row `s − 1` holds state `s`, column `j`
/// holds action `Θ_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    values: Vec<Vec<f64>>,
    pub params: AgentParams,
}

impl QTable {
    pub fn new(params: AgentParams) -> Result<Self, AgentError> {
        params.validate()?;
        let n = params.max_targets + 1;
        Ok(Self {
            values: vec![vec![0.0; n]; n],
            params,
        })
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    fn check(&self, s: usize, a: usize) -> Result<(), AgentError> {
        let n = self.size();
        if s == 0 || s > n {
            return Err(AgentError::State { state: s, max: n });
        }
        if a >= n {
            return Err(AgentError::Action { action: a, max: n - 1 });
        }
        Ok(())
    }

    pub fn get(&self, s: usize, a: usize) -> Result<f64, AgentError> {
        self.check(s, a)?;
        Ok(self.values[s - 1][a])
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) -> Result<(), AgentError> {
        self.check(s, a)?;
        self.values[s - 1][a] = v;
        Ok(())
    }

    pub fn row(&self, s: usize) -> Result<&[f64], AgentError> {
        self.check(s, 0)?;
        Ok(&self.values[s - 1])
    }

    /// Greedy action; the lowest index wins ties.
    pub fn argmax(&self, s: usize) -> Result<usize, AgentError> {
        let row = self.row(s)?;
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        Ok(best)
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    /// `s = min(T_p, T̃) + 1`.
    pub s: usize,
    /// Raw detection count `T_p`.
    pub count: usize,
}

impl AgentState {
    pub fn initial() -> Self {
        Self { s: 1, count: 0 }
    }
}

pub fn extract_state(frame: &DetectionFrame, max_targets: usize) -> AgentState {
    AgentState {
        s: frame.count.min(max_targets) + 1,
        count: frame.count,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Recovery,
    Explore,
    Greedy,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSelection {
    pub j: usize,
    /// Top-`j` bins by statistic, in descending order.
    pub bins: Vec<usize>,
    pub branch: Branch,
}

/// Bin indices of the `j` largest statistics; ties go to the lower index.
pub fn top_bins(statistics: &[f64], j: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..statistics.len()).collect();
    idx.sort_by(|&a, &b| statistics[b].total_cmp(&statistics[a]).then(a.cmp(&b)));
    idx.truncate(j.min(statistics.len()));
    idx
}

/// Quasi ε-greedy choice with target recovery.
///
/// A drop in the detection count forces the greedy action of the previous
/// state. Otherwise, with probability ε, `j` is drawn uniformly from
/// `{count, …, T̃}`; else the greedy action of the new state is taken.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    prev: &AgentState,
    next: &AgentState,
    frame: &DetectionFrame,
    rng: &mut R,
) -> Result<ActionSelection, AgentError> {
    let max_j = q.size() - 1;
    let (j, branch) = if next.count < prev.count {
        (q.argmax(prev.s)?, Branch::Recovery)
    } else if rng.random::<f64>() < q.params.epsilon {
        let lo = next.count.min(max_j);
        (rng.random_range(lo..=max_j), Branch::Explore)
    } else {
        (q.argmax(next.s)?, Branch::Greedy)
    };
    Ok(ActionSelection {
        j,
        bins: top_bins(&frame.statistics, j),
        branch,
    })
}

/// Which bins count as targets when scoring a frame.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSetPolicy {
    /// Bins whose statistic crosses the threshold.
    #[default]
    Detected,
    /// Ground-truth target bins.
    Oracle(Vec<usize>),
}

/// `Σ_{m∈T̂} P̂_D(m) − Σ_{m∉T̂} P̂_D(m)`.
pub fn compute_reward(frame: &DetectionFrame, policy: &TargetSetPolicy) -> f64 {
    let in_set: Vec<bool> = match policy {
        TargetSetPolicy::Detected => frame.decisions.clone(),
        TargetSetPolicy::Oracle(bins) => {
            let mut v = vec![false; frame.len()];
            for &b in bins {
                if b < v.len() {
                    v[b] = true;
                }
            }
            v
        }
    };
    frame
        .pd_estimates
        .iter()
        .zip(&in_set)
        .map(|(&pd, &t)| if t { pd } else { -pd })
        .sum()
}

/// `Q(s,a) ← Q(s,a) + α[r + γQ(s',a') − Q(s,a)]`.
pub fn sarsa_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    reward: f64,
    s_next: usize,
    a_next: usize,
) -> Result<(), AgentError> {
    let cur = q.get(s, a)?;
    let nxt = q.get(s_next, a_next)?;
    let updated = cur + q.params.learning_rate * (reward + q.params.discount * nxt - cur);
    q.set(s, a, updated)
}

/// Transmit beam vectors `conj(a_t)` of the given bins.
pub fn beam_vectors(bins: &[usize], upa: &UpaConfig, grid: &SpatialGrid) -> Result<Vec<Vec<Complex64>>, AgentError> {
    bins.iter()
        .map(|&b| {
            let bin = grid.bin(b).map_err(|_| AgentError::Bin(b))?;
            Ok(steering(upa.tx_x, upa.tx_y, bin.nu_x, bin.nu_y).conj())
        })
        .collect()
}

/// Covariance that focuses power on the selected bins; isotropic when empty.
pub fn act_to_covariance(
    bins: &[usize],
    upa: &UpaConfig,
    grid: &SpatialGrid,
    power: f64,
) -> Result<TransmitCovariance, AgentError> {
    if bins.is_empty() {
        return Ok(TransmitCovariance::isotropic(upa.n_t(), power)?);
    }
    let vectors = beam_vectors(bins, upa, grid)?;
    Ok(design_covariance(&vectors, power)?.0)
}

/// Non-learning baseline: beams towards every bin above the threshold.
pub fn nrl_action(frame: &DetectionFrame) -> ActionSelection {
    ActionSelection {
        j: frame.count,
        bins: top_bins(&frame.statistics, frame.count),
        branch: Branch::Fixed,
    }
}

/// Beam selection strategy for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Rl,
    Nrl,
    Orthogonal,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Rl, PolicyKind::Nrl, PolicyKind::Orthogonal];

    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Rl => "rl",
            PolicyKind::Nrl => "nrl",
            PolicyKind::Orthogonal => "orthogonal",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rl" => Ok(PolicyKind::Rl),
            "nrl" => Ok(PolicyKind::Nrl),
            "orthogonal" => Ok(PolicyKind::Orthogonal),
            other => Err(format!("unknown policy '{other}' (expected rl, nrl or orthogonal)")),
        }
    }
}

/// Per-run SARSA learner holding `(s_p, a_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SarsaAgent {
    pub q: QTable,
    pub state: AgentState,
    pub action: usize,
}

/// Result of one learning step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub selection: ActionSelection,
    pub reward: f64,
    pub state: AgentState,
}

impl SarsaAgent {
    /// `Q = 0`, `s₀ = 1`, `a₀ = 1`.
    pub fn new(params: AgentParams) -> Result<Self, AgentError> {
        Ok(Self {
            q: QTable::new(params)?,
            state: AgentState::initial(),
            action: 1.min(params.max_targets),
        })
    }

    /// Scores the frame, picks `a_{p+1}` and applies the SARSA update.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        frame: &DetectionFrame,
        targets: &TargetSetPolicy,
        rng: &mut R,
    ) -> Result<Step, AgentError> {
        let next = extract_state(frame, self.q.params.max_targets);
        let reward = compute_reward(frame, targets);
        let selection = select_action(&self.q, &self.state, &next, frame, rng)?;
        sarsa_update(&mut self.q, self.state.s, self.action, reward, next.s, selection.j)?;
        self.state = next;
        self.action = selection.j;
        Ok(Step {
            selection,
            reward,
            state: next,
        })
    }
}
