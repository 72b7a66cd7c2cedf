use crate::TaskId;

/// Per-task statistics for one training step.
///
/// Advantage statistics are `None` when every group of the task was
/// filtered out.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetrics {
    pub task_id: TaskId,
    /// Groups sampled for the task, before filtering.
    pub groups: usize,
    pub mean_reward: f64,
    pub adv_mean: Option<f64>,
    pub adv_var: Option<f64>,
    pub adv_max: Option<f64>,
    pub w2: Option<f64>,
    /// Mean per-token policy entropy over the task's rollouts, in nats.
    pub entropy: f64,
    pub in_band: bool,
    pub mean_length: f64,
    pub filtered_groups: usize,
    /// Whether the rewards that reached the estimator were pairwise distinct.
    pub distinct_rewards: bool,
    /// EMA-GRPO scale after the step, once initialised.
    pub ema_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub tasks: Vec<TaskMetrics>,
    /// Batch-mean clipped surrogate at the start of the update.
    pub surrogate: f64,
    pub total_loss: f64,
    /// Norm of the first ascent direction.
    pub grad_norm: f64,
}

impl StepMetrics {
    pub fn task(&self, id: &TaskId) -> Option<&TaskMetrics> {
        self.tasks.iter().find(|t| &t.task_id == id)
    }

    pub fn filtered_groups(&self) -> usize {
        self.tasks.iter().map(|t| t.filtered_groups).sum()
    }

    pub fn all_distinct(&self) -> bool {
        self.tasks.iter().all(|t| t.distinct_rewards)
    }

    /// Largest over smallest per-task advantage variance. `None` if some
    /// task has no advantages or every variance is zero.
    pub fn equity_ratio(&self) -> Option<f64> {
        let vars: Option<Vec<f64>> = self.tasks.iter().map(|t| t.adv_var).collect();
        let vars = vars?;
        let max = vars.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vars.iter().copied().fold(f64::INFINITY, f64::min);
        if max.is_nan() || max <= 0.0 {
            return None;
        }
        Some(if min > 0.0 { max / min } else { f64::INFINITY })
    }

    /// Number of tasks whose entropy left their band at this step.
    pub fn entropy_violations(&self) -> usize {
        self.tasks.iter().filter(|t| !t.in_band).count()
    }
}

/// Mean of a task's `mean_reward` over a slice of steps.
pub fn mean_reward_over(metrics: &[StepMetrics], task: &TaskId) -> Option<f64> {
    let values: Vec<f64> = metrics
        .iter()
        .filter_map(|m| m.task(task))
        .map(|t| t.mean_reward)
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str, var: Option<f64>) -> TaskMetrics {
        TaskMetrics {
            task_id: TaskId::new(id),
            groups: 1,
            mean_reward: 0.5,
            adv_mean: var.map(|_| 0.0),
            adv_var: var,
            adv_max: var.map(f64::sqrt),
            w2: var.map(|_| 0.1),
            entropy: 1.0,
            in_band: true,
            mean_length: 2.0,
            filtered_groups: 0,
            distinct_rewards: true,
            ema_sigma: None,
        }
    }

    fn step(tasks: Vec<TaskMetrics>) -> StepMetrics {
        StepMetrics {
            step: 0,
            tasks,
            surrogate: 0.0,
            total_loss: 0.0,
            grad_norm: 0.0,
        }
    }

    #[test]
    fn equity_ratio_cases() {
        assert_eq!(
            step(vec![task("a", Some(2.0)), task("b", Some(0.5))]).equity_ratio(),
            Some(4.0)
        );
        assert_eq!(
            step(vec![task("a", Some(2.0)), task("b", None)]).equity_ratio(),
            None
        );
        assert_eq!(
            step(vec![task("a", Some(0.0)), task("b", Some(0.0))]).equity_ratio(),
            None
        );
        assert_eq!(
            step(vec![task("a", Some(1.0)), task("b", Some(0.0))]).equity_ratio(),
            Some(f64::INFINITY)
        );
    }

    #[test]
    fn reward_window_mean() {
        let mut s = vec![step(vec![task("a", None)]), step(vec![task("a", None)])];
        s[1].tasks[0].mean_reward = 1.5;
        assert_eq!(mean_reward_over(&s, &TaskId::new("a")), Some(1.0));
        assert_eq!(mean_reward_over(&s, &TaskId::new("b")), None);
    }
}
