//! Group-relative advantage estimators.
//!
//! Three linear baselines (GRPO standardisation, Dr.GRPO mean-centering and
//! EMA-GRPO with a task-tracked scale) and the rank-based Gaussian estimator,
//! which sends each reward's mid-rank plotting position through the standard
//! normal quantile function. That map is the monotone optimal transport from
//! the empirical reward distribution onto N(0, 1).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{usage, Error, Result};
use crate::quantiles::target_quantiles;
use crate::TaskId;

/// Default stabiliser added to the standard deviation.
pub const DEFAULT_STABILITY_EPSILON: f64 = 1e-6;
/// Default EMA decay.
pub const DEFAULT_EMA_DECAY: f64 = 0.9;

/// One query's sampled responses and their scalar rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub task_id: TaskId,
    pub query_id: String,
    rewards: Vec<f64>,
    response_lengths: Vec<usize>,
}

impl RolloutGroup {
    pub fn new(
        task_id: TaskId,
        query_id: impl Into<String>,
        rewards: Vec<f64>,
        response_lengths: Vec<usize>,
    ) -> Result<Self> {
        if rewards.len() < 2 {
            return usage(format!(
                "a rollout group needs at least 2 responses, got {}",
                rewards.len()
            ));
        }
        if rewards.len() != response_lengths.len() {
            return usage(format!(
                "{} rewards but {} response lengths",
                rewards.len(),
                response_lengths.len()
            ));
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return usage(format!("reward {r} is not finite"));
        }
        if response_lengths.contains(&0) {
            return usage("response lengths must be positive");
        }
        Ok(Self {
            task_id,
            query_id: query_id.into(),
            rewards,
            response_lengths,
        })
    }

    /// Group with unit response lengths, for callers that only care about rewards.
    pub fn from_rewards(
        task_id: TaskId,
        query_id: impl Into<String>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        let n = rewards.len();
        Self::new(task_id, query_id, rewards, vec![1; n])
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn response_lengths(&self) -> &[usize] {
        &self.response_lengths
    }

    pub fn size(&self) -> usize {
        self.rewards.len()
    }

    /// Population mean and standard deviation of the rewards.
    pub fn moments(&self) -> (f64, f64) {
        population_moments(&self.rewards)
    }

    /// True when every reward is identical (no relative signal).
    pub fn is_uniform(&self) -> bool {
        self.rewards.iter().all(|&r| r == self.rewards[0])
    }
}

pub(crate) fn population_moments(values: &[f64]) -> (f64, f64) {
    // Constant input: return the value itself so centred rewards are exactly 0.
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Which advantage estimator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Grpo,
    DrGrpo,
    EmaGrpo,
    GGrpo,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Grpo,
        Estimator::DrGrpo,
        Estimator::EmaGrpo,
        Estimator::GGrpo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Grpo => "grpo",
            Estimator::DrGrpo => "drgrpo",
            Estimator::EmaGrpo => "emagrpo",
            Estimator::GGrpo => "ggrpo",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', '.'], "").as_str() {
            "grpo" => Ok(Estimator::Grpo),
            "drgrpo" => Ok(Estimator::DrGrpo),
            "emagrpo" | "ema" => Ok(Estimator::EmaGrpo),
            "ggrpo" | "gaussiangrpo" | "gaussian" => Ok(Estimator::GGrpo),
            _ => usage(format!(
                "unknown estimator `{s}` (expected grpo, drgrpo, emagrpo or ggrpo)"
            )),
        }
    }
}

/// Per-response advantages produced by one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub estimator: Estimator,
}

impl AdvantageVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `(R_i - mean) / (std + epsilon)` within the group.
pub fn grpo_advantage(group: &RolloutGroup, epsilon: f64) -> AdvantageVector {
    let (mean, std) = group.moments();
    let values = group
        .rewards()
        .iter()
        .map(|r| (r - mean) / (std + epsilon))
        .collect();
    AdvantageVector {
        values,
        estimator: Estimator::Grpo,
    }
}

/// `R_i - mean`, no scale normalisation.
pub fn dr_grpo_advantage(group: &RolloutGroup) -> AdvantageVector {
    let (mean, _) = group.moments();
    let values = group.rewards().iter().map(|r| r - mean).collect();
    AdvantageVector {
        values,
        estimator: Estimator::DrGrpo,
    }
}

/// Running per-task standard deviation for EMA-GRPO.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub task_id: TaskId,
    sigma: f64,
    decay: f64,
    initialized: bool,
}

impl EmaState {
    pub fn new(task_id: TaskId, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return usage(format!("EMA decay must lie in [0, 1), got {decay}"));
        }
        Ok(Self {
            task_id,
            sigma: 0.0,
            decay,
            initialized: false,
        })
    }

    /// A state that has already absorbed observations, with scale `sigma`.
    pub fn with_sigma(task_id: TaskId, decay: f64, sigma: f64) -> Result<Self> {
        let mut s = Self::new(task_id, decay)?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return usage(format!(
                "EMA sigma must be a non-negative finite number, got {sigma}"
            ));
        }
        s.sigma = sigma;
        s.initialized = true;
        Ok(s)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn initialized(&self) -> bool {
        self.initialized
    }

    /// Folds one group standard deviation into the average. The first
    /// observation is taken as-is.
    pub fn observe(&self, group_sigma: f64) -> Self {
        let sigma = if self.initialized {
            self.decay * self.sigma + (1.0 - self.decay) * group_sigma
        } else {
            group_sigma
        };
        Self {
            sigma,
            initialized: true,
            ..self.clone()
        }
    }
}

/// EMA-GRPO: centre on the group mean, scale by the updated task sigma.
pub fn ema_grpo_advantage(
    group: &RolloutGroup,
    state: &EmaState,
    epsilon: f64,
) -> Result<(AdvantageVector, EmaState)> {
    if state.task_id != group.task_id {
        return usage(format!(
            "EMA state for task `{}` applied to a group of task `{}`",
            state.task_id, group.task_id
        ));
    }
    let (mean, std) = group.moments();
    let next = state.observe(std);
    let scale = next.sigma + epsilon;
    let values = group.rewards().iter().map(|r| (r - mean) / scale).collect();
    Ok((
        AdvantageVector {
            values,
            estimator: Estimator::EmaGrpo,
        },
        next,
    ))
}

/// Rank-based Gaussian advantages over a reward batch.
///
/// Rewards are ranked, each rank `k` is mapped to `Φ⁻¹((k - 0.5)/N)`, every
/// set of exactly equal rewards receives the mean of its quantiles, and the
/// result is returned in input order. The output depends on the rewards only
/// through their ranks, so it is invariant under strictly increasing
/// transforms and the largest advantage is `Φ⁻¹((N - 0.5)/N)` however extreme
/// the best reward is.
pub fn g_grpo_advantage(rewards: &[f64]) -> Result<Vec<f64>> {
    let n = rewards.len();
    if n < 2 {
        return usage(format!(
            "rank-based advantages need at least 2 rewards, got {n}"
        ));
    }
    if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
        return usage(format!("reward {r} is not finite"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rewards[a].total_cmp(&rewards[b]));
    let quantiles = target_quantiles(n);

    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let value = rewards[order[start]];
        let mut end = start + 1;
        while end < n && rewards[order[end]] == value {
            end += 1;
        }
        let tied = if end - start == 1 {
            quantiles[start]
        } else {
            tie_mean(&quantiles, start, end)
        };
        for &idx in &order[start..end] {
            out[idx] = tied;
        }
        start = end;
    }
    Ok(out)
}

// Mean of quantiles[start..end], summed outermost-first so a tie run and its
// mirror image produce exactly negated means.
fn tie_mean(quantiles: &[f64], start: usize, end: usize) -> f64 {
    let n = quantiles.len();
    let mut idx: Vec<usize> = (start..end).collect();
    idx.sort_by_key(|&i| (i.min(n - 1 - i), i));
    let sum: f64 = idx.iter().map(|&i| quantiles[i]).sum();
    sum / (end - start) as f64
}

/// Per-task EMA states, created on first use with a shared decay.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaBook {
    decay: f64,
    states: BTreeMap<TaskId, EmaState>,
}

impl EmaBook {
    pub fn new(decay: f64) -> Result<Self> {
        EmaState::new(TaskId::new(""), decay)?;
        Ok(Self {
            decay,
            states: BTreeMap::new(),
        })
    }

    pub fn get(&self, task: &TaskId) -> Option<&EmaState> {
        self.states.get(task)
    }

    pub fn states(&self) -> impl Iterator<Item = &EmaState> {
        self.states.values()
    }

    fn state_for(&self, task: &TaskId) -> EmaState {
        self.states.get(task).cloned().unwrap_or_else(|| EmaState {
            task_id: task.clone(),
            sigma: 0.0,
            decay: self.decay,
            initialized: false,
        })
    }
}

/// Estimator selection for [`advantage_batch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSettings {
    pub estimator: Estimator,
    /// For G-GRPO, rank all same-task rewards in the batch jointly instead of
    /// per group.
    pub pool_per_task: bool,
    pub epsilon: f64,
}

impl Default for BatchSettings {
    fn default() -> Self {
        Self {
            estimator: Estimator::GGrpo,
            pool_per_task: true,
            epsilon: DEFAULT_STABILITY_EPSILON,
        }
    }
}

/// Applies the selected estimator to every group, preserving order and sizes.
///
/// EMA-GRPO folds groups into `ema` in input order.
pub fn advantage_batch(
    groups: &[RolloutGroup],
    settings: &BatchSettings,
    ema: &mut EmaBook,
) -> Result<Vec<AdvantageVector>> {
    if groups.is_empty() {
        return usage("advantage_batch needs at least one group");
    }
    match settings.estimator {
        Estimator::Grpo => Ok(groups
            .iter()
            .map(|g| grpo_advantage(g, settings.epsilon))
            .collect()),
        Estimator::DrGrpo => Ok(groups.iter().map(dr_grpo_advantage).collect()),
        Estimator::EmaGrpo => groups
            .iter()
            .map(|g| {
                let state = ema.state_for(&g.task_id);
                let (adv, next) = ema_grpo_advantage(g, &state, settings.epsilon)?;
                ema.states.insert(g.task_id.clone(), next);
                Ok(adv)
            })
            .collect(),
        Estimator::GGrpo if !settings.pool_per_task => groups
            .iter()
            .map(|g| {
                Ok(AdvantageVector {
                    values: g_grpo_advantage(g.rewards())?,
                    estimator: Estimator::GGrpo,
                })
            })
            .collect(),
        Estimator::GGrpo => pooled_g_grpo(groups),
    }
}

fn pooled_g_grpo(groups: &[RolloutGroup]) -> Result<Vec<AdvantageVector>> {
    let mut by_task: BTreeMap<&TaskId, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_task.entry(&g.task_id).or_default().push(i);
    }
    let mut out: Vec<Option<AdvantageVector>> = vec![None; groups.len()];
    for members in by_task.values() {
        let pooled: Vec<f64> = members
            .iter()
            .flat_map(|&i| groups[i].rewards().iter().copied())
            .collect();
        let advantages = g_grpo_advantage(&pooled)?;
        let mut offset = 0;
        for &i in members {
            let size = groups[i].size();
            out[i] = Some(AdvantageVector {
                values: advantages[offset..offset + size].to_vec(),
                estimator: Estimator::GGrpo,
            });
            offset += size;
        }
    }
    Ok(out
        .into_iter()
        .map(|a| a.expect("every group belongs to a task"))
        .collect())
}
