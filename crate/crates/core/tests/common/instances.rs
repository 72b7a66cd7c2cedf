//! Random small policy / rollout instances for gradient checks.

#![allow(dead_code)]

use ggrpo_core::advantage::{AdvantageVector, Estimator};
use ggrpo_core::policy::{token_ratio, ClipConfig, PolicyTable, Rollout};
use ggrpo_core::TaskId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub policy: PolicyTable,
    pub rollouts: Vec<Rollout>,
    pub advantages: AdvantageVector,
    pub clip: ClipConfig,
    /// Tokens whose ratio sits outside the clip range on the flat side.
    pub clipped_tokens: usize,
}

/// vocab <= 8, rows <= 16, G <= 8, |y| <= 6; every ratio stays at least
/// `margin` away from both clip edges.
pub fn random_instance(seed: u64, margin: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clip = ClipConfig::new(0.2).unwrap();
    loop {
        let order = rng.random_range(0..=1usize);
        let vocab = if order == 1 {
            rng.random_range(2..=7usize)
        } else {
            rng.random_range(2..=8usize)
        };
        let slots = if order == 1 {
            (16 / (vocab + 1)).clamp(1, 2)
        } else {
            rng.random_range(1..=4usize)
        };
        let eos = if rng.random_bool(0.5) { Some(0) } else { None };
        let base = PolicyTable::new(slots, vocab, order, eos).unwrap();
        let n = base.logits().len();
        let old_logits: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let old = base.clone().with_logits(old_logits.clone()).unwrap();
        let g = rng.random_range(1..=8usize);
        let rollouts: Vec<Rollout> = (0..g)
            .map(|i| {
                let slot = rng.random_range(0..slots);
                let max_len = rng.random_range(1..=6usize);
                old.sample_rollout(slot, TaskId::new("t"), max_len, seed * 1000 + i as u64)
                    .unwrap()
            })
            .collect();
        let advantages = AdvantageVector {
            values: (0..g).map(|_| rng.random_range(-2.0..2.0)).collect(),
            estimator: Estimator::GGrpo,
        };
        let new_logits: Vec<f64> = old_logits
            .iter()
            .map(|z| z + rng.random_range(-0.4..0.4))
            .collect();
        let policy = base.with_logits(new_logits).unwrap();

        let mut ok = true;
        let mut clipped = 0;
        for (r, &a) in rollouts.iter().zip(&advantages.values) {
            for t in 0..r.len() {
                let ratio = token_ratio(&policy, r, t).unwrap();
                let eps = clip.epsilon();
                if (ratio - (1.0 + eps)).abs() < margin || (ratio - (1.0 - eps)).abs() < margin {
                    ok = false;
                }
                if (a > 0.0 && ratio > 1.0 + eps) || (a < 0.0 && ratio < 1.0 - eps) {
                    clipped += 1;
                }
            }
        }
        if ok {
            return Instance {
                policy,
                rollouts,
                advantages,
                clip,
                clipped_tokens: clipped,
            };
        }
    }
}
