use std::collections::{BTreeMap, BTreeSet};

use crate::advantage::{
    advantage_batch, AdvantageVector, BatchSettings, EmaBook, Estimator, RolloutGroup,
    DEFAULT_EMA_DECAY, DEFAULT_STABILITY_EPSILON,
};
use crate::error::{usage, Result};
use crate::policy::{
    accumulate_surrogate_gradient, clipped_surrogate, entropy_gradient, mean_token_entropy,
    total_loss, ClipConfig, PolicyTable, Rollout,
};
use crate::quantiles::{wasserstein2_to_normal, SortedSample};
use crate::shaping::{
    composite_reward, entropy_penalty_slope, CompositeRewardWeights, EntropyBounds,
};
use crate::TaskId;

use super::env::{score_rollout, TaskSpec};
use super::filter::survives;
use super::metrics::{StepMetrics, TaskMetrics};

/// Symbol 0 ends a response; content symbols are `1..vocab_size`.
pub const EOS: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    /// Rollouts per group, G.
    pub group_size: usize,
    /// Groups per step, split evenly across tasks.
    pub batch_groups: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub ema_alpha: f64,
    pub stability_epsilon: f64,
    pub estimator: Estimator,
    pub dynamic_filter: bool,
    pub seed: u64,
    /// Gradient steps per sampled batch against the same behaviour policy.
    pub inner_steps: usize,
    pub pool_per_task: bool,
    pub vocab_size: usize,
    pub max_len: usize,
    pub context_order: usize,
    pub reward_weights: CompositeRewardWeights,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            batch_groups: 16,
            steps: 500,
            learning_rate: 0.5,
            clip_epsilon: 0.2,
            ema_alpha: DEFAULT_EMA_DECAY,
            stability_epsilon: DEFAULT_STABILITY_EPSILON,
            estimator: Estimator::GGrpo,
            dynamic_filter: true,
            seed: 7,
            inner_steps: 1,
            pool_per_task: true,
            vocab_size: 6,
            max_len: 4,
            context_order: 1,
            reward_weights: CompositeRewardWeights::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return usage(format!(
                "group_size must be at least 2, got {}",
                self.group_size
            ));
        }
        if self.batch_groups == 0 {
            return usage("batch_groups must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return usage(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        ClipConfig::new(self.clip_epsilon)?;
        if !(0.0..1.0).contains(&self.ema_alpha) {
            return usage(format!(
                "ema_alpha must lie in [0, 1), got {}",
                self.ema_alpha
            ));
        }
        if !(self.stability_epsilon > 0.0 && self.stability_epsilon.is_finite()) {
            return usage(format!(
                "stability_epsilon must be positive, got {}",
                self.stability_epsilon
            ));
        }
        if self.inner_steps == 0 {
            return usage("inner_steps must be positive");
        }
        if self.vocab_size < 2 {
            return usage(format!(
                "vocab_size must be at least 2, got {}",
                self.vocab_size
            ));
        }
        if self.max_len == 0 {
            return usage("max_len must be positive");
        }
        if self.context_order > 1 {
            return usage(format!(
                "context_order must be 0 or 1, got {}",
                self.context_order
            ));
        }
        CompositeRewardWeights::new(
            self.reward_weights.accuracy,
            self.reward_weights.length,
            self.reward_weights.format,
            self.reward_weights.structure,
        )?;
        Ok(())
    }
}

/// One group of scored rollouts for a single query of a single task.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGroup {
    pub query_id: String,
    pub rollouts: Vec<Rollout>,
}

impl SampledGroup {
    pub fn task_id(&self) -> Option<&TaskId> {
        self.rollouts.first().map(|r| &r.task_id)
    }

    /// The reward view handed to advantage estimation.
    pub fn to_group(&self) -> Result<RolloutGroup> {
        let Some(task) = self.task_id() else {
            return usage(format!("group `{}` has no rollouts", self.query_id));
        };
        if self.rollouts.iter().any(|r| &r.task_id != task) {
            return usage(format!("group `{}` mixes tasks", self.query_id));
        }
        RolloutGroup::new(
            task.clone(),
            self.query_id.clone(),
            self.rollouts.iter().map(|r| r.reward).collect(),
            self.rollouts.iter().map(Rollout::len).collect(),
        )
    }
}

/// Metrics for one update together with the groups that reached the
/// estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub metrics: StepMetrics,
    pub estimated: Vec<RolloutGroup>,
}

/// Multi-task trainer over a shared tabular policy with one slot per task.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainerConfig,
    tasks: Vec<TaskSpec>,
    policy: PolicyTable,
    ema: EmaBook,
    clip: ClipConfig,
    bounds: BTreeMap<TaskId, EntropyBounds>,
    step: usize,
}

impl Trainer {
    pub fn new(config: TrainerConfig, tasks: Vec<TaskSpec>) -> Result<Self> {
        config.validate()?;
        if tasks.is_empty() {
            return usage("at least one task is required");
        }
        let mut seen = BTreeSet::new();
        for task in &tasks {
            task.validate()?;
            if !seen.insert(task.task_id.clone()) {
                return usage(format!("duplicate task id `{}`", task.task_id));
            }
            if let Some(&bad) = task
                .target
                .iter()
                .find(|&&s| s == EOS || s >= config.vocab_size)
            {
                return usage(format!(
                    "task `{}`: target symbol {bad} outside 1..{}",
                    task.task_id, config.vocab_size
                ));
            }
        }
        if !config.batch_groups.is_multiple_of(tasks.len()) {
            return usage(format!(
                "batch_groups ({}) must be a multiple of the task count ({})",
                config.batch_groups,
                tasks.len()
            ));
        }
        let policy = PolicyTable::new(
            tasks.len(),
            config.vocab_size,
            config.context_order,
            Some(EOS),
        )?;
        let ema = EmaBook::new(config.ema_alpha)?;
        let clip = ClipConfig::new(config.clip_epsilon)?;
        let bounds = tasks
            .iter()
            .map(|t| (t.task_id.clone(), t.entropy_bounds))
            .collect();
        Ok(Self {
            config,
            tasks,
            policy,
            ema,
            clip,
            bounds,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn policy(&self) -> &PolicyTable {
        &self.policy
    }

    pub fn ema(&self) -> &EmaBook {
        &self.ema
    }

    /// Number of completed updates.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Samples and scores `batch_groups` groups round-robin across tasks
    /// from the current policy.
    pub fn sample_batch(&self) -> Result<Vec<SampledGroup>> {
        let cfg = &self.config;
        let step = self.step as u64;
        (0..cfg.batch_groups)
            .map(|g| {
                let slot = g % self.tasks.len();
                let task = &self.tasks[slot];
                let rollouts = (0..cfg.group_size)
                    .map(|i| {
                        let path = [step, g as u64, i as u64];
                        let mut r = self.policy.sample_rollout(
                            slot,
                            task.task_id.clone(),
                            cfg.max_len,
                            derive_seed(cfg.seed, &path, 0),
                        )?;
                        let score =
                            score_rollout(task, &r, Some(EOS), derive_seed(cfg.seed, &path, 1));
                        r.reward = composite_reward(
                            score,
                            r.len(),
                            r.terminated_with(Some(EOS)),
                            None,
                            &task.envelope,
                            &cfg.reward_weights,
                        );
                        Ok(r)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SampledGroup {
                    query_id: format!("s{step}g{g}"),
                    rollouts,
                })
            })
            .collect()
    }

    /// Filters, estimates advantages and applies the ascent step for one batch.
    pub fn update(&mut self, batch: &[SampledGroup]) -> Result<StepOutcome> {
        if batch.is_empty() {
            return usage("update needs at least one group");
        }
        let groups = batch
            .iter()
            .map(SampledGroup::to_group)
            .collect::<Result<Vec<_>>>()?;
        let slots: BTreeMap<&TaskId, usize> = self
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (&t.task_id, i))
            .collect();
        for (sg, g) in batch.iter().zip(&groups) {
            let Some(&slot) = slots.get(&g.task_id) else {
                return usage(format!(
                    "group `{}` belongs to unknown task `{}`",
                    g.query_id, g.task_id
                ));
            };
            if sg.rollouts.iter().any(|r| r.slot != slot) {
                return usage(format!("group `{}` uses the wrong policy slot", g.query_id));
            }
        }

        let kept: Vec<usize> = (0..groups.len())
            .filter(|&i| !self.config.dynamic_filter || survives(&groups[i]))
            .collect();
        let estimated: Vec<RolloutGroup> = kept.iter().map(|&i| groups[i].clone()).collect();
        let advantages = if estimated.is_empty() {
            Vec::new()
        } else {
            let settings = BatchSettings {
                estimator: self.config.estimator,
                pool_per_task: self.config.pool_per_task,
                epsilon: self.config.stability_epsilon,
            };
            advantage_batch(&estimated, &settings, &mut self.ema)?
        };

        let task_rollouts: BTreeMap<TaskId, Vec<Rollout>> = self
            .tasks
            .iter()
            .map(|t| {
                let rs = batch
                    .iter()
                    .filter(|sg| sg.task_id() == Some(&t.task_id))
                    .flat_map(|sg| sg.rollouts.iter().cloned())
                    .collect();
                (t.task_id.clone(), rs)
            })
            .collect();
        let entropy_now = |policy: &PolicyTable| -> Result<BTreeMap<TaskId, f64>> {
            task_rollouts
                .iter()
                .filter(|(_, rs)| !rs.is_empty())
                .map(|(id, rs)| Ok((id.clone(), mean_token_entropy(policy, rs)?)))
                .collect()
        };
        let entropy_start = entropy_now(&self.policy)?;

        let mut surrogate_start = 0.0;
        let mut grad_norm = 0.0;
        for k in 0..self.config.inner_steps {
            let (surrogate, direction) =
                self.ascent_direction(&kept, batch, &advantages, &task_rollouts)?;
            if k == 0 {
                surrogate_start = surrogate;
                grad_norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
            }
            self.policy
                .apply_step(&direction, self.config.learning_rate);
        }
        let loss = total_loss(surrogate_start, &entropy_start, &self.bounds)?;

        let tasks = self
            .tasks
            .iter()
            .map(|t| {
                let id = &t.task_id;
                let all: Vec<&RolloutGroup> = groups.iter().filter(|g| &g.task_id == id).collect();
                let rewards: Vec<f64> = all
                    .iter()
                    .flat_map(|g| g.rewards().iter().copied())
                    .collect();
                let lengths: Vec<usize> = all
                    .iter()
                    .flat_map(|g| g.response_lengths().iter().copied())
                    .collect();
                let adv: Vec<f64> = estimated
                    .iter()
                    .zip(&advantages)
                    .filter(|(g, _)| &g.task_id == id)
                    .flat_map(|(_, a)| a.values.iter().copied())
                    .collect();
                let seen: Vec<f64> = estimated
                    .iter()
                    .filter(|g| &g.task_id == id)
                    .flat_map(|g| g.rewards().iter().copied())
                    .collect();
                let entropy = entropy_start.get(id).copied().unwrap_or(f64::NAN);
                let (adv_mean, adv_var, adv_max, w2) = advantage_stats(&adv)?;
                Ok(TaskMetrics {
                    task_id: id.clone(),
                    groups: all.len(),
                    mean_reward: mean(&rewards),
                    adv_mean,
                    adv_var,
                    adv_max,
                    w2,
                    entropy,
                    in_band: t.entropy_bounds.contains(entropy),
                    mean_length: lengths.iter().sum::<usize>() as f64 / lengths.len().max(1) as f64,
                    filtered_groups: all.len()
                        - estimated.iter().filter(|g| &g.task_id == id).count(),
                    distinct_rewards: pairwise_distinct(&seen),
                    ema_sigma: self
                        .ema
                        .get(id)
                        .filter(|s| s.initialized())
                        .map(|s| s.sigma()),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let metrics = StepMetrics {
            step: self.step,
            tasks,
            surrogate: surrogate_start,
            total_loss: loss,
            grad_norm,
        };
        self.step += 1;
        Ok(StepOutcome { metrics, estimated })
    }

    /// Samples a batch and applies one update.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let batch = self.sample_batch()?;
        Ok(self.update(&batch)?.metrics)
    }

    /// Runs the remaining configured steps.
    pub fn run(&mut self) -> Result<Vec<StepMetrics>> {
        let remaining = self.config.steps.saturating_sub(self.step);
        (0..remaining).map(|_| self.step()).collect()
    }

    // Batch-mean surrogate and the ascent direction: surrogate gradient minus
    // the weighted entropy-penalty gradient of every out-of-band task.
    fn ascent_direction(
        &self,
        kept: &[usize],
        batch: &[SampledGroup],
        advantages: &[AdvantageVector],
        task_rollouts: &BTreeMap<TaskId, Vec<Rollout>>,
    ) -> Result<(f64, Vec<f64>)> {
        let mut direction = vec![0.0; self.policy.logits().len()];
        let mut surrogate = 0.0;
        if !kept.is_empty() {
            let w = 1.0 / kept.len() as f64;
            for (&i, adv) in kept.iter().zip(advantages) {
                let rollouts = &batch[i].rollouts;
                surrogate += w * clipped_surrogate(&self.policy, rollouts, adv, &self.clip)?;
                accumulate_surrogate_gradient(
                    &self.policy,
                    rollouts,
                    adv,
                    &self.clip,
                    w,
                    &mut direction,
                );
            }
        }
        for (id, rollouts) in task_rollouts {
            let bounds = &self.bounds[id];
            if rollouts.is_empty() || bounds.lambda_ent() == 0.0 {
                continue;
            }
            let h = mean_token_entropy(&self.policy, rollouts)?;
            let slope = entropy_penalty_slope(h, bounds);
            if slope == 0.0 {
                continue;
            }
            let coef = bounds.lambda_ent() * slope;
            for (d, g) in direction
                .iter_mut()
                .zip(entropy_gradient(&self.policy, rollouts)?)
            {
                *d -= coef * g;
            }
        }
        Ok((surrogate, direction))
    }
}

/// Runs `config.steps` updates from a uniform policy.
pub fn train(config: &TrainerConfig, tasks: &[TaskSpec]) -> Result<Vec<StepMetrics>> {
    Trainer::new(config.clone(), tasks.to_vec())?.run()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

type AdvStats = (Option<f64>, Option<f64>, Option<f64>, Option<f64>);

fn advantage_stats(adv: &[f64]) -> Result<AdvStats> {
    if adv.is_empty() {
        return Ok((None, None, None, None));
    }
    let m = mean(adv);
    let var = adv.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / adv.len() as f64;
    let max = adv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w2 = wasserstein2_to_normal(&SortedSample::from_unsorted(adv.to_vec())?);
    Ok((Some(m), Some(var), Some(max), Some(w2)))
}

fn pairwise_distinct(values: &[f64]) -> bool {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.len() >= 2 && sorted.windows(2).all(|w| w[0] != w[1])
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent substream seed for `(seed, path..., stream)`.
fn derive_seed(seed: u64, path: &[u64], stream: u64) -> u64 {
    path.iter()
        .chain(std::iter::once(&stream))
        .fold(splitmix64(seed), |acc, &x| splitmix64(acc ^ x))
}
