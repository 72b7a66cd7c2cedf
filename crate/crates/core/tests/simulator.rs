mod common;

use common::oracle;
use ggrpo_core::advantage::{advantage_batch, BatchSettings, EmaBook, Estimator, RolloutGroup};
use ggrpo_core::shaping::EntropyBounds;
use ggrpo_core::simulator::{
    compare_estimators, dynamic_filter, mean_reward_over, train, TaskSpec, Topology, Trainer,
    TrainerConfig,
};
use ggrpo_core::TaskId;
use proptest::prelude::*;

fn scaled_pair() -> Vec<TaskSpec> {
    let mut small = TaskSpec::new("small", Topology::ScaledContinuous, vec![1, 2]);
    small.reward_scale = 1.0;
    let mut large = TaskSpec::new("large", Topology::ScaledContinuous, vec![3, 4]);
    large.reward_scale = 100.0;
    vec![small, large]
}

fn heavy_tail(magnitude: f64) -> TaskSpec {
    let mut t = TaskSpec::new("h", Topology::HeavyTail, vec![1, 2]);
    t.outlier_prob = 0.1;
    t.outlier_magnitude = magnitude;
    t
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainerConfig {
        steps: 40,
        ..TrainerConfig::default()
    };
    let mut tasks = scaled_pair();
    tasks.push(heavy_tail(30.0));
    let cfg = TrainerConfig {
        batch_groups: 15,
        ..cfg
    };
    for estimator in Estimator::ALL {
        let cfg = TrainerConfig {
            estimator,
            ..cfg.clone()
        };
        assert_eq!(train(&cfg, &tasks).unwrap(), train(&cfg, &tasks).unwrap());
    }
    let mut a = Trainer::new(cfg.clone(), tasks.clone()).unwrap();
    let mut b = Trainer::new(cfg, tasks).unwrap();
    for _ in 0..5 {
        let (ba, bb) = (a.sample_batch().unwrap(), b.sample_batch().unwrap());
        assert_eq!(ba, bb);
        let (oa, ob) = (a.update(&ba).unwrap(), b.update(&bb).unwrap());
        assert_eq!(oa, ob);
    }
    assert_eq!(a.policy().logits(), b.policy().logits());
}

#[test]
fn compare_is_deterministic() {
    let cfg = TrainerConfig {
        steps: 10,
        batch_groups: 2,
        ..TrainerConfig::default()
    };
    let tasks = [heavy_tail(50.0)];
    assert_eq!(
        compare_estimators(&cfg, &tasks).unwrap(),
        compare_estimators(&cfg, &tasks).unwrap()
    );
}

#[test]
fn zero_steps_yield_no_metrics() {
    let cfg = TrainerConfig {
        steps: 0,
        ..TrainerConfig::default()
    };
    assert!(train(&cfg, &scaled_pair()).unwrap().is_empty());
}

#[test]
fn invalid_config_fails_before_training() {
    let cfg = TrainerConfig {
        learning_rate: -1.0,
        ..TrainerConfig::default()
    };
    assert!(train(&cfg, &scaled_pair()).is_err());
    assert!(compare_estimators(&cfg, &scaled_pair()).is_err());
    assert!(train(&TrainerConfig::default(), &[]).is_err());
}

#[test]
fn binary_task_is_learnable() {
    let cfg = TrainerConfig {
        steps: 200,
        ..TrainerConfig::default()
    };
    let task = TaskSpec::new("b", Topology::Binary, vec![1, 2]);
    let metrics = train(&cfg, &[task]).unwrap();
    let id = TaskId::new("b");
    let lead = mean_reward_over(&metrics[..20], &id).unwrap();
    let trail = mean_reward_over(&metrics[180..], &id).unwrap();
    assert!(trail > lead, "{lead} -> {trail}");
}

#[test]
fn pooled_advantages_equalise_scaled_tasks() {
    let cfg = TrainerConfig {
        steps: 100,
        ..TrainerConfig::default()
    };
    let g = train(&cfg, &scaled_pair()).unwrap();
    let d = train(
        &TrainerConfig {
            estimator: Estimator::DrGrpo,
            ..cfg
        },
        &scaled_pair(),
    )
    .unwrap();
    let mut checked = 0;
    for (mg, md) in g.iter().zip(&d) {
        if mg.all_distinct() {
            let r = mg.equity_ratio().unwrap();
            assert!((0.9..=1.1).contains(&r), "step {}: {r}", mg.step);
            checked += 1;
        }
        assert!(md.equity_ratio().unwrap() > 5.0);
    }
    assert!(checked > 90);
}

#[test]
fn outlier_magnitude_moves_only_linear_advantages() {
    let cfg = TrainerConfig {
        steps: 30,
        ..TrainerConfig::default()
    };
    let n = cfg.batch_groups * cfg.group_size;
    let cap = oracle::normal_quantile((n as f64 - 0.5) / n as f64);
    let mut previous = 0.0;
    for magnitude in [10.0, 100.0, 1000.0] {
        let report = compare_estimators(&cfg, &[heavy_tail(magnitude)]).unwrap();
        let g = report
            .run(Estimator::GGrpo)
            .unwrap()
            .max_advantage()
            .unwrap();
        assert!((g - cap).abs() < 1e-9, "{g} vs {cap}");
        let d = report
            .run(Estimator::DrGrpo)
            .unwrap()
            .max_advantage()
            .unwrap();
        assert!(d > previous, "{d} <= {previous}");
        previous = d;
        let s = report
            .run(Estimator::DrGrpo)
            .unwrap()
            .outlier_sensitivity()
            .unwrap();
        assert!(s.max_advantage_delta > 0.0);
    }
}

#[test]
fn planted_uniform_groups_are_filtered() {
    let cfg = TrainerConfig::default();
    let mut trainer = Trainer::new(cfg, scaled_pair()).unwrap();
    for planted in [0usize, 1, 3, 7, 16] {
        let mut batch = trainer.sample_batch().unwrap();
        let natural = batch
            .iter()
            .filter(|g| g.to_group().unwrap().is_uniform())
            .count();
        assert_eq!(natural, 0);
        for g in batch.iter_mut().take(planted) {
            let r = g.rollouts[0].reward;
            g.rollouts.iter_mut().for_each(|x| x.reward = r);
        }
        let outcome = trainer.update(&batch).unwrap();
        assert_eq!(outcome.metrics.filtered_groups(), planted);
        assert_eq!(outcome.estimated.len(), batch.len() - planted);
        assert!(outcome.estimated.iter().all(|g| !g.is_uniform()));
    }
}

#[test]
fn entropy_shaping_reduces_band_violations() {
    let run = |lambda: f64| -> usize {
        let tasks: Vec<TaskSpec> = [
            ("a", Topology::Binary, vec![1, 2]),
            ("b", Topology::ContinuousIou, vec![3, 4, 4]),
        ]
        .into_iter()
        .map(|(id, topology, target)| {
            let mut t = TaskSpec::new(id, topology, target);
            t.entropy_bounds = EntropyBounds::new(0.15, 0.9, lambda).unwrap();
            t
        })
        .collect();
        let metrics = train(&TrainerConfig::default(), &tasks).unwrap();
        metrics.iter().map(|m| m.entropy_violations()).sum()
    };
    let (shaped, free) = (run(0.01), run(0.0));
    assert!(shaped < free, "{shaped} vs {free}");
}

fn groups_for(task: &str, rewards: &[f64], g: usize) -> Vec<RolloutGroup> {
    rewards
        .chunks(g)
        .enumerate()
        .map(|(k, c)| {
            RolloutGroup::from_rewards(TaskId::new(task), format!("{task}{k}"), c.to_vec()).unwrap()
        })
        .collect()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #[test]
    fn filter_survivors_have_signal(
        batch in prop::collection::vec(prop::collection::vec(0u8..3, 2..6), 0..12),
    ) {
        let groups: Vec<RolloutGroup> = batch
            .iter()
            .map(|r| RolloutGroup::from_rewards(TaskId::new("t"), "q", r.iter().map(|&x| f64::from(x)).collect()).unwrap())
            .collect();
        let uniform = groups.iter().filter(|g| g.is_uniform()).count();
        let expected: Vec<RolloutGroup> = groups.iter().filter(|g| !g.is_uniform()).cloned().collect();
        let (kept, removed) = dynamic_filter(groups);
        prop_assert_eq!(removed, uniform);
        prop_assert_eq!(&kept, &expected);
        for g in &kept {
            let s = sorted(g.rewards().to_vec());
            prop_assert!(s.first() != s.last());
        }
    }

    #[test]
    fn pooled_multisets_match_across_scales(
        a in prop::collection::btree_set(0u32..1_000_000, 32),
        b in prop::collection::btree_set(0u32..1_000_000, 32),
        scale in 1.0f64..1e4,
    ) {
        let ra: Vec<f64> = a.iter().rev().map(|&x| f64::from(x) * 1e-6).collect();
        let rb: Vec<f64> = b.iter().map(|&x| (f64::from(x) * scale).ln_1p()).collect();
        let mut groups = groups_for("a", &ra, 8);
        groups.extend(groups_for("b", &rb, 8));
        let adv = advantage_batch(&groups, &BatchSettings::default(), &mut EmaBook::new(0.9).unwrap()).unwrap();
        let pool = |task: &str| -> Vec<f64> {
            sorted(groups.iter().zip(&adv).filter(|(g, _)| g.task_id.as_str() == task).flat_map(|(_, a)| a.values.clone()).collect())
        };
        prop_assert_eq!(pool("a"), pool("b"));
    }

    #[test]
    fn outlier_injection_changes_nothing_without_rank_shift(
        base in prop::collection::btree_set(0u32..1000, 16),
        magnitude in 1.0f64..1e12,
    ) {
        let rewards: Vec<f64> = base.iter().map(|&x| f64::from(x)).collect();
        let mut spiked = rewards.clone();
        *spiked.last_mut().unwrap() += magnitude;
        let settings = BatchSettings::default();
        let before = advantage_batch(&groups_for("t", &rewards, 8), &settings, &mut EmaBook::new(0.9).unwrap()).unwrap();
        let after = advantage_batch(&groups_for("t", &spiked, 8), &settings, &mut EmaBook::new(0.9).unwrap()).unwrap();
        prop_assert_eq!(before, after);
    }
}
