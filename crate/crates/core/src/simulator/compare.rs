use std::collections::BTreeMap;

use crate::advantage::Estimator;
use crate::error::Result;
use crate::TaskId;

use super::env::TaskSpec;
use super::metrics::{mean_reward_over, StepMetrics};
use super::trainer::{train, Trainer, TrainerConfig};

/// Steps averaged for the final mean reward.
pub const FINAL_WINDOW: usize = 20;

/// One estimator's run, plus the outlier-free rerun when any task injects
/// outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRun {
    pub estimator: Estimator,
    pub metrics: Vec<StepMetrics>,
    pub outlier_free: Option<Vec<StepMetrics>>,
}

/// Change caused by outlier injection, injected minus clean.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierSensitivity {
    pub max_advantage_delta: f64,
    pub final_reward_delta: BTreeMap<TaskId, f64>,
}

impl EstimatorRun {
    fn task_ids(&self) -> Vec<TaskId> {
        self.metrics
            .first()
            .map(|m| m.tasks.iter().map(|t| t.task_id.clone()).collect())
            .unwrap_or_default()
    }

    /// Mean reward over the trailing [`FINAL_WINDOW`] steps, per task.
    pub fn final_mean_rewards(&self) -> BTreeMap<TaskId, f64> {
        final_rewards(&self.metrics, &self.task_ids())
    }

    pub fn equity_ratios(&self) -> Vec<Option<f64>> {
        self.metrics.iter().map(StepMetrics::equity_ratio).collect()
    }

    pub fn w2_trajectory(&self, task: &TaskId) -> Vec<Option<f64>> {
        self.metrics
            .iter()
            .map(|m| m.task(task).and_then(|t| t.w2))
            .collect()
    }

    /// Largest advantage seen over the whole run.
    pub fn max_advantage(&self) -> Option<f64> {
        max_advantage(&self.metrics)
    }

    pub fn outlier_sensitivity(&self) -> Option<OutlierSensitivity> {
        let clean = self.outlier_free.as_ref()?;
        let ids = self.task_ids();
        let with = final_rewards(&self.metrics, &ids);
        let without = final_rewards(clean, &ids);
        let final_reward_delta = with
            .iter()
            .filter_map(|(id, a)| without.get(id).map(|b| (id.clone(), a - b)))
            .collect();
        let max_advantage_delta = match (max_advantage(&self.metrics), max_advantage(clean)) {
            (Some(a), Some(b)) => a - b,
            _ => f64::NAN,
        };
        Some(OutlierSensitivity {
            max_advantage_delta,
            final_reward_delta,
        })
    }
}

fn final_rewards(metrics: &[StepMetrics], ids: &[TaskId]) -> BTreeMap<TaskId, f64> {
    let tail = &metrics[metrics.len().saturating_sub(FINAL_WINDOW)..];
    ids.iter()
        .filter_map(|id| mean_reward_over(tail, id).map(|r| (id.clone(), r)))
        .collect()
}

fn max_advantage(metrics: &[StepMetrics]) -> Option<f64> {
    metrics
        .iter()
        .flat_map(|m| m.tasks.iter().filter_map(|t| t.adv_max))
        .reduce(f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub runs: Vec<EstimatorRun>,
}

impl ComparisonReport {
    pub fn run(&self, estimator: Estimator) -> Option<&EstimatorRun> {
        self.runs.iter().find(|r| r.estimator == estimator)
    }
}

/// Trains once per estimator with identical seeds and tasks.
pub fn compare_estimators(config: &TrainerConfig, tasks: &[TaskSpec]) -> Result<ComparisonReport> {
    Trainer::new(config.clone(), tasks.to_vec())?;
    let injects = tasks.iter().any(|t| t.outlier_prob > 0.0);
    let clean: Vec<TaskSpec> = tasks
        .iter()
        .map(|t| TaskSpec {
            outlier_prob: 0.0,
            ..t.clone()
        })
        .collect();
    let runs = Estimator::ALL
        .iter()
        .map(|&estimator| {
            let cfg = TrainerConfig {
                estimator,
                ..config.clone()
            };
            let metrics = train(&cfg, tasks)?;
            let outlier_free = if injects {
                Some(train(&cfg, &clean)?)
            } else {
                None
            };
            Ok(EstimatorRun {
                estimator,
                metrics,
                outlier_free,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { runs })
}
