use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{usage, Error, Result};
use crate::policy::Rollout;
use crate::shaping::{EntropyBounds, LengthEnvelope};
use crate::TaskId;

/// Reward topology of a synthetic task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// 1 on an exact match with the target, else 0.
    Binary,
    /// Multiset overlap |y ∩ target| / |y ∪ target| in [0, 1].
    ContinuousIou,
    /// Overlap score plus, with probability `outlier_prob`, a spike of
    /// `outlier_magnitude`.
    HeavyTail,
    /// `reward_scale` on an exact match, else 0.
    BimodalSplit,
    /// `reward_scale * (0.8 * overlap + 0.2 * u)` with `u ~ U(0, 1)`.
    ScaledContinuous,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Binary => "binary",
            Topology::ContinuousIou => "continuous-iou",
            Topology::HeavyTail => "heavy-tail",
            Topology::BimodalSplit => "bimodal-split",
            Topology::ScaledContinuous => "scaled-continuous",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Topology::Binary),
            "continuous-iou" => Ok(Topology::ContinuousIou),
            "heavy-tail" => Ok(Topology::HeavyTail),
            "bimodal-split" => Ok(Topology::BimodalSplit),
            "scaled-continuous" => Ok(Topology::ScaledContinuous),
            _ => usage(format!(
                "unknown topology `{s}` (expected binary, continuous-iou, heavy-tail, bimodal-split or scaled-continuous)"
            )),
        }
    }
}

/// A synthetic task: reward topology, hidden target and shaping parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub topology: Topology,
    /// Hidden target symbol sequence.
    pub target: Vec<usize>,
    pub reward_scale: f64,
    pub outlier_prob: f64,
    pub outlier_magnitude: f64,
    pub envelope: LengthEnvelope,
    pub entropy_bounds: EntropyBounds,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<TaskId>, topology: Topology, target: Vec<usize>) -> Self {
        Self {
            task_id: task_id.into(),
            topology,
            target,
            reward_scale: 1.0,
            outlier_prob: 0.0,
            outlier_magnitude: 1.0,
            envelope: LengthEnvelope::new(1, 2, 4, 8).expect("valid envelope"),
            entropy_bounds: EntropyBounds::new(0.0, f64::MAX, 0.0).expect("valid bounds"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return usage(format!("task `{}`: target must be non-empty", self.task_id));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return usage(format!(
                "task `{}`: reward_scale must be positive",
                self.task_id
            ));
        }
        if !(0.0..0.5).contains(&self.outlier_prob) {
            return usage(format!(
                "task `{}`: outlier_prob must lie in [0, 0.5)",
                self.task_id
            ));
        }
        if !(self.outlier_magnitude > 0.0 && self.outlier_magnitude.is_finite()) {
            return usage(format!(
                "task `{}`: outlier_magnitude must be positive",
                self.task_id
            ));
        }
        Ok(())
    }
}

/// The response with a trailing end symbol removed.
pub fn content(rollout: &Rollout, eos: Option<usize>) -> &[usize] {
    match (rollout.tokens.last(), eos) {
        (Some(&last), Some(e)) if last == e => &rollout.tokens[..rollout.tokens.len() - 1],
        _ => &rollout.tokens,
    }
}

/// `sum_s min(a_s, b_s) / sum_s max(a_s, b_s)` over symbol counts.
pub fn multiset_iou(a: &[usize], b: &[usize]) -> f64 {
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for &s in a {
        counts.entry(s).or_default().0 += 1;
    }
    for &s in b {
        counts.entry(s).or_default().1 += 1;
    }
    let (inter, union) = counts
        .values()
        .fold((0, 0), |(i, u), &(x, y)| (i + x.min(y), u + x.max(y)));
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Scores one rollout under the task's topology. Deterministic in `seed`.
pub fn score_rollout(task: &TaskSpec, rollout: &Rollout, eos: Option<usize>, seed: u64) -> f64 {
    let y = content(rollout, eos);
    let exact = y == task.target.as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match task.topology {
        Topology::Binary => f64::from(u8::from(exact)),
        Topology::ContinuousIou => multiset_iou(y, &task.target),
        Topology::HeavyTail => {
            let spike = if rng.random::<f64>() < task.outlier_prob {
                task.outlier_magnitude
            } else {
                0.0
            };
            multiset_iou(y, &task.target) + spike
        }
        Topology::BimodalSplit => {
            if exact {
                task.reward_scale
            } else {
                0.0
            }
        }
        Topology::ScaledContinuous => {
            let u: f64 = rng.random();
            task.reward_scale * (0.8 * multiset_iou(y, &task.target) + 0.2 * u)
        }
    }
}
