//! Tabular autoregressive categorical policy and the clipped surrogate.
//!
//! Logits live in a dense `rows x vocab` table. A row is selected by the task
//! slot and, for `context_order = 1`, the previously emitted symbol (with a
//! dedicated start row). Everything the trainer needs is computed
//! analytically: importance ratios, the PPO-style clipped objective, its
//! gradient, per-token entropy and the entropy gradient.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advantage::AdvantageVector;
use crate::error::{usage, Result};
use crate::shaping::{entropy_penalty, EntropyBounds};
use crate::TaskId;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    logits: Vec<f64>,
    vocab_size: usize,
    context_order: usize,
    task_slots: usize,
    eos: Option<usize>,
}

impl PolicyTable {
    /// Uniform policy (all logits zero).
    pub fn new(
        task_slots: usize,
        vocab_size: usize,
        context_order: usize,
        eos: Option<usize>,
    ) -> Result<Self> {
        if task_slots == 0 || vocab_size == 0 {
            return usage("policy needs at least one task slot and one symbol");
        }
        if context_order > 1 {
            return usage(format!("context_order must be 0 or 1, got {context_order}"));
        }
        if let Some(e) = eos {
            if e >= vocab_size {
                return usage(format!(
                    "end symbol {e} outside vocabulary of size {vocab_size}"
                ));
            }
        }
        let states = if context_order == 0 {
            1
        } else {
            vocab_size + 1
        };
        Ok(Self {
            logits: vec![0.0; task_slots * states * vocab_size],
            vocab_size,
            context_order,
            task_slots,
            eos,
        })
    }

    pub fn with_logits(mut self, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != self.logits.len() {
            return usage(format!(
                "expected {} logits, got {}",
                self.logits.len(),
                logits.len()
            ));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return usage("logits must be finite");
        }
        self.logits = logits;
        Ok(self)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn context_order(&self) -> usize {
        self.context_order
    }

    pub fn task_slots(&self) -> usize {
        self.task_slots
    }

    pub fn eos(&self) -> Option<usize> {
        self.eos
    }

    pub fn rows(&self) -> usize {
        self.logits.len() / self.vocab_size
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn states_per_slot(&self) -> usize {
        if self.context_order == 0 {
            1
        } else {
            self.vocab_size + 1
        }
    }

    /// Row index for a task slot and the previous symbol (`None` at the start).
    pub fn row(&self, slot: usize, prev: Option<usize>) -> usize {
        let state = match (self.context_order, prev) {
            (0, _) | (_, None) => 0,
            (_, Some(p)) => p + 1,
        };
        slot * self.states_per_slot() + state
    }

    fn row_logits(&self, row: usize) -> &[f64] {
        &self.logits[row * self.vocab_size..(row + 1) * self.vocab_size]
    }

    /// Log-softmax of one row.
    pub fn log_probs(&self, row: usize) -> Vec<f64> {
        let z = self.row_logits(row);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        z.iter().map(|v| v - lse).collect()
    }

    pub fn probs(&self, row: usize) -> Vec<f64> {
        self.log_probs(row).into_iter().map(f64::exp).collect()
    }

    pub fn log_prob(&self, row: usize, symbol: usize) -> f64 {
        self.log_probs(row)[symbol]
    }

    /// Categorical entropy of one row in nats.
    pub fn entropy(&self, row: usize) -> f64 {
        let lp = self.log_probs(row);
        -lp.iter().map(|l| l.exp() * l).sum::<f64>()
    }

    /// Rows visited by each token of the rollout, in order.
    pub fn rollout_rows(&self, rollout: &Rollout) -> Vec<usize> {
        let mut prev = None;
        rollout
            .tokens
            .iter()
            .map(|&tok| {
                let r = self.row(rollout.slot, prev);
                prev = Some(tok);
                r
            })
            .collect()
    }

    /// Samples symbols until the end symbol or `max_len`, recording the
    /// sampling-time log-probabilities. Deterministic in `seed`.
    pub fn sample_rollout(
        &self,
        slot: usize,
        task_id: TaskId,
        max_len: usize,
        seed: u64,
    ) -> Result<Rollout> {
        if max_len == 0 {
            return usage("max_len must be at least 1");
        }
        if slot >= self.task_slots {
            return usage(format!(
                "task slot {slot} out of range ({} slots)",
                self.task_slots
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tokens = Vec::with_capacity(max_len);
        let mut logprobs = Vec::with_capacity(max_len);
        let mut prev = None;
        for _ in 0..max_len {
            let lp = self.log_probs(self.row(slot, prev));
            let u: f64 = rng.random();
            let tok = sample_index(&lp, u);
            tokens.push(tok);
            logprobs.push(lp[tok]);
            prev = Some(tok);
            if Some(tok) == self.eos {
                break;
            }
        }
        Ok(Rollout {
            task_id,
            slot,
            tokens,
            behavior_logprobs: logprobs,
            reward: 0.0,
        })
    }

    /// In-place `logits += step * direction`.
    pub fn apply_step(&mut self, direction: &[f64], step: f64) {
        for (z, d) in self.logits.iter_mut().zip(direction) {
            *z += step * d;
        }
    }
}

// Inverse-CDF draw; the last symbol with non-zero mass absorbs rounding slack.
fn sample_index(log_probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

/// One sampled response with behaviour-policy log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub task_id: TaskId,
    pub slot: usize,
    pub tokens: Vec<usize>,
    pub behavior_logprobs: Vec<f64>,
    pub reward: f64,
}

impl Rollout {
    pub fn new(
        task_id: TaskId,
        slot: usize,
        tokens: Vec<usize>,
        behavior_logprobs: Vec<f64>,
        reward: f64,
    ) -> Result<Self> {
        if tokens.is_empty() || tokens.len() != behavior_logprobs.len() {
            return usage(
                "a rollout needs one behaviour log-probability per token and at least one token",
            );
        }
        if behavior_logprobs.iter().any(|&l| l > 0.0 || l.is_nan()) {
            return usage("behaviour log-probabilities must be <= 0");
        }
        Ok(Self {
            task_id,
            slot,
            tokens,
            behavior_logprobs,
            reward,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whether the response closed with the given end symbol.
    pub fn terminated_with(&self, eos: Option<usize>) -> bool {
        eos.is_some() && self.tokens.last().copied() == eos
    }
}

/// PPO clipping range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipConfig {
    epsilon: f64,
}

impl ClipConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return usage(format!("clip epsilon must lie in (0, 1), got {epsilon}"));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `pi_theta(y_t | ctx) / pi_old(y_t | ctx)` for token `t`.
pub fn token_ratio(policy: &PolicyTable, rollout: &Rollout, t: usize) -> Result<f64> {
    if t >= rollout.len() {
        return usage(format!(
            "token index {t} out of range for a rollout of length {}",
            rollout.len()
        ));
    }
    let row = policy.rollout_rows(rollout)[t];
    Ok((policy.log_prob(row, rollout.tokens[t]) - rollout.behavior_logprobs[t]).exp())
}

fn check_lengths(rollouts: &[Rollout], advantages: &AdvantageVector) -> Result<()> {
    if rollouts.is_empty() {
        return usage("surrogate needs at least one rollout");
    }
    if rollouts.len() != advantages.len() {
        return usage(format!(
            "{} rollouts but {} advantages",
            rollouts.len(),
            advantages.len()
        ));
    }
    Ok(())
}

/// Clipped surrogate for one group:
/// `(1/G) sum_i (1/|y_i|) sum_t min(r A_i, clip(r, 1-eps, 1+eps) A_i)`.
pub fn clipped_surrogate(
    policy: &PolicyTable,
    rollouts: &[Rollout],
    advantages: &AdvantageVector,
    cfg: &ClipConfig,
) -> Result<f64> {
    check_lengths(rollouts, advantages)?;
    let eps = cfg.epsilon;
    let mut total = 0.0;
    for (rollout, &adv) in rollouts.iter().zip(&advantages.values) {
        let rows = policy.rollout_rows(rollout);
        let mut per_token = 0.0;
        for ((&row, &tok), &old) in rows
            .iter()
            .zip(&rollout.tokens)
            .zip(&rollout.behavior_logprobs)
        {
            let r = (policy.log_prob(row, tok) - old).exp();
            per_token += (r * adv).min(r.clamp(1.0 - eps, 1.0 + eps) * adv);
        }
        total += per_token / rollout.len() as f64;
    }
    Ok(total / rollouts.len() as f64)
}

/// Whether a token's unclipped branch is the active one in the min. Ties
/// (both branches equal) count as unclipped.
fn unclipped(ratio: f64, adv: f64, eps: f64) -> bool {
    if adv > 0.0 {
        ratio <= 1.0 + eps
    } else if adv < 0.0 {
        ratio >= 1.0 - eps
    } else {
        false
    }
}

/// Analytic gradient of [`clipped_surrogate`] with respect to the logits.
///
/// An unclipped token contributes `A_i r grad log pi(y_t)`; for a softmax row
/// that is `A_i r (onehot(y_t) - p)`. Clipped tokens contribute nothing.
pub fn surrogate_gradient(
    policy: &PolicyTable,
    rollouts: &[Rollout],
    advantages: &AdvantageVector,
    cfg: &ClipConfig,
) -> Result<Vec<f64>> {
    check_lengths(rollouts, advantages)?;
    let mut grad = vec![0.0; policy.logits.len()];
    accumulate_surrogate_gradient(policy, rollouts, advantages, cfg, 1.0, &mut grad);
    Ok(grad)
}

pub(crate) fn accumulate_surrogate_gradient(
    policy: &PolicyTable,
    rollouts: &[Rollout],
    advantages: &AdvantageVector,
    cfg: &ClipConfig,
    weight: f64,
    grad: &mut [f64],
) {
    let v = policy.vocab_size;
    let g = rollouts.len() as f64;
    for (rollout, &adv) in rollouts.iter().zip(&advantages.values) {
        let rows = policy.rollout_rows(rollout);
        let scale = weight / (g * rollout.len() as f64);
        for ((&row, &tok), &old) in rows
            .iter()
            .zip(&rollout.tokens)
            .zip(&rollout.behavior_logprobs)
        {
            let lp = policy.log_probs(row);
            let r = (lp[tok] - old).exp();
            if !unclipped(r, adv, cfg.epsilon) {
                continue;
            }
            let coef = scale * adv * r;
            let slice = &mut grad[row * v..(row + 1) * v];
            for (j, (gj, l)) in slice.iter_mut().zip(&lp).enumerate() {
                let indicator = if j == tok { 1.0 } else { 0.0 };
                *gj += coef * (indicator - l.exp());
            }
        }
    }
}

/// Mean over all tokens of the current policy's entropy at each visited row.
pub fn mean_token_entropy(policy: &PolicyTable, rollouts: &[Rollout]) -> Result<f64> {
    let mut tokens = 0usize;
    let mut total = 0.0;
    for rollout in rollouts {
        for row in policy.rollout_rows(rollout) {
            total += policy.entropy(row);
            tokens += 1;
        }
    }
    if tokens == 0 {
        return usage("mean_token_entropy needs at least one token");
    }
    Ok(total / tokens as f64)
}

/// Gradient of [`mean_token_entropy`] with respect to the logits:
/// `dH/dz_j = -p_j (log p_j + H)` per visit, averaged over tokens.
pub fn entropy_gradient(policy: &PolicyTable, rollouts: &[Rollout]) -> Result<Vec<f64>> {
    let mut visits: BTreeMap<usize, usize> = BTreeMap::new();
    let mut tokens = 0usize;
    for rollout in rollouts {
        for row in policy.rollout_rows(rollout) {
            *visits.entry(row).or_default() += 1;
            tokens += 1;
        }
    }
    if tokens == 0 {
        return usage("entropy_gradient needs at least one token");
    }
    let v = policy.vocab_size;
    let mut grad = vec![0.0; policy.logits.len()];
    for (&row, &count) in &visits {
        let lp = policy.log_probs(row);
        let h = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
        let w = count as f64 / tokens as f64;
        for (gj, l) in grad[row * v..(row + 1) * v].iter_mut().zip(&lp) {
            *gj = -w * l.exp() * (l + h);
        }
    }
    Ok(grad)
}

/// `-surrogate + sum_task lambda_ent * penalty(H_task)`, the quantity the
/// trainer minimises.
pub fn total_loss(
    surrogate: f64,
    h_per_task: &BTreeMap<TaskId, f64>,
    bounds_per_task: &BTreeMap<TaskId, EntropyBounds>,
) -> Result<f64> {
    let mut loss = -surrogate;
    for (task, &h) in h_per_task {
        let bounds = bounds_per_task
            .get(task)
            .ok_or_else(|| crate::Error::Usage(format!("no entropy bounds for task `{task}`")))?;
        loss += bounds.lambda_ent() * entropy_penalty(h, bounds);
    }
    Ok(loss)
}
