//! Workload generators shared by the criterion benches.

use ggrpo_core::advantage::RolloutGroup;
use ggrpo_core::TaskId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` continuous rewards drawn uniformly from [0, scale).
pub fn continuous_rewards(n: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>() * scale).collect()
}

/// `n` binary rewards with success probability `p`.
pub fn binary_rewards(n: usize, p: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        .collect()
}

/// `groups` rollout groups of size `g`, spread round-robin over `tasks` tasks.
pub fn rollout_groups(groups: usize, g: usize, tasks: usize, seed: u64) -> Vec<RolloutGroup> {
    (0..groups)
        .map(|k| {
            let rewards = continuous_rewards(g, 1.0 + k as f64, seed.wrapping_add(k as u64));
            RolloutGroup::new(
                TaskId::new(format!("task{}", k % tasks)),
                format!("q{k}"),
                rewards,
                vec![1; g],
            )
            .expect("valid group")
        })
        .collect()
}
