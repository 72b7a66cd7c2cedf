//! Synthetic multi-task environments and the training loop that compares
//! advantage estimators on them.

mod compare;
mod env;
mod filter;
mod metrics;
mod trainer;

pub use compare::{
    compare_estimators, ComparisonReport, EstimatorRun, OutlierSensitivity, FINAL_WINDOW,
};
pub use env::{content, multiset_iou, score_rollout, TaskSpec, Topology};
pub use filter::dynamic_filter;
pub use metrics::{mean_reward_over, StepMetrics, TaskMetrics};
pub use trainer::{train, SampledGroup, StepOutcome, Trainer, TrainerConfig, EOS};
