//! Experiment runner for the `ggrpo` simulator: config loading, training and
//! comparison runs with CSV output, and one-shot advantage computation.

use std::path::PathBuf;

use ggrpo_core::advantage::{
    dr_grpo_advantage, ema_grpo_advantage, g_grpo_advantage, grpo_advantage, EmaState,
};
use ggrpo_core::advantage::{DEFAULT_EMA_DECAY, DEFAULT_STABILITY_EPSILON};
use ggrpo_core::simulator::{compare_estimators, Trainer};
use ggrpo_core::{Estimator, RolloutGroup, TaskId};
use thiserror::Error;

pub mod config;
pub mod output;

pub use config::{ExperimentConfig, Mode};

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or arguments.
    #[error("{0}")]
    Config(String),
    /// Failure after validation, such as an unwritable output directory.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ggrpo_core::Error> for CliError {
    fn from(e: ggrpo_core::Error) -> Self {
        match e {
            ggrpo_core::Error::Usage(_) => CliError::Config(e.to_string()),
            ggrpo_core::Error::Domain(_) => CliError::Runtime(e.to_string()),
        }
    }
}

/// Runs the experiment in `cfg.mode` and returns the files written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let dir = &cfg.output_dir;
    output::create_dir(dir)?;
    let mut written = Vec::new();
    match cfg.mode {
        Mode::Train => {
            let metrics = Trainer::new(cfg.trainer.clone(), cfg.tasks.clone())?.run()?;
            output::write_metrics(dir, &metrics, &cfg.tasks, cfg.emit_plots_data, &mut written)?;
            output::write_summary(dir, &output::train_summary(cfg, &metrics), &mut written)?;
        }
        Mode::Compare => {
            let report = compare_estimators(&cfg.trainer, &cfg.tasks)?;
            for run in &report.runs {
                let sub = dir.join(run.estimator.name());
                output::write_metrics(
                    &sub,
                    &run.metrics,
                    &cfg.tasks,
                    cfg.emit_plots_data,
                    &mut written,
                )?;
                if let Some(clean) = &run.outlier_free {
                    output::write_metrics(
                        &sub.join("outlier-free"),
                        clean,
                        &cfg.tasks,
                        false,
                        &mut written,
                    )?;
                }
            }
            output::write_comparison(
                dir,
                &output::comparison_csv(&report, &cfg.tasks),
                &mut written,
            )?;
            output::write_summary(dir, &output::compare_summary(cfg, &report), &mut written)?;
        }
    }
    Ok(written)
}

/// Options for [`advantage_oneshot`]. Unset values take the library defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OneshotOptions {
    pub ema_alpha: Option<f64>,
    pub ema_sigma: Option<f64>,
    pub epsilon: Option<f64>,
}

/// Advantages of one group of rewards, in input order.
///
/// For EMA-GRPO a given `ema_sigma` is the tracked scale before this group;
/// without one the group's own deviation initialises the tracker.
pub fn advantage_oneshot(
    rewards: &[f64],
    estimator: Estimator,
    opts: OneshotOptions,
) -> Result<Vec<f64>, CliError> {
    if rewards.len() < 2 {
        return Err(CliError::Config(format!(
            "need at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if estimator != Estimator::EmaGrpo && (opts.ema_alpha.is_some() || opts.ema_sigma.is_some()) {
        return Err(CliError::Config(format!(
            "--ema-alpha and --ema-sigma apply only to emagrpo, not {estimator}"
        )));
    }
    let epsilon = opts.epsilon.unwrap_or(DEFAULT_STABILITY_EPSILON);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(CliError::Config(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if estimator == Estimator::GGrpo {
        return Ok(g_grpo_advantage(rewards)?);
    }
    let task = TaskId::new("oneshot");
    let group = RolloutGroup::from_rewards(task.clone(), "oneshot", rewards.to_vec())?;
    Ok(match estimator {
        Estimator::Grpo => grpo_advantage(&group, epsilon).values,
        Estimator::DrGrpo => dr_grpo_advantage(&group).values,
        _ => {
            let alpha = opts.ema_alpha.unwrap_or(DEFAULT_EMA_DECAY);
            let state = match opts.ema_sigma {
                Some(sigma) => EmaState::with_sigma(task, alpha, sigma)?,
                None => EmaState::new(task, alpha)?,
            };
            ema_grpo_advantage(&group, &state, epsilon)?.0.values
        }
    })
}
