//! Rank-based Gaussian advantage estimation for group-relative policy
//! optimisation, together with the linear baselines it is compared against,
//! task-level reward shaping, a tabular categorical policy with its clipped
//! surrogate objective, and a small multi-task training simulator.

use std::fmt;

pub mod advantage;
pub mod error;
pub mod policy;
pub mod quantiles;
pub mod shaping;
pub mod simulator;

pub use advantage::{AdvantageVector, Estimator, RolloutGroup};
pub use error::{Error, Result};

/// Opaque task label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(String);

impl TaskId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

impl From<String> for TaskId {
    fn from(s: String) -> Self {
        Self(s)
    }
}
