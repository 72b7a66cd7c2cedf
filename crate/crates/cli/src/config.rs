//! Experiment configuration files.
//!
//! A config is a TOML document with top-level run settings, a `[trainer]`
//! table and one `[[tasks]]` entry per task. Unknown keys are errors. Every
//! omitted value takes a default, and [`ExperimentConfig::to_toml`] writes the
//! fully defaulted form back out.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use ggrpo_core::shaping::{CompositeRewardWeights, EntropyBounds, LengthEnvelope, TaskKind};
use ggrpo_core::simulator::{TaskSpec, Topology, Trainer, TrainerConfig};
use ggrpo_core::Estimator;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::CliError;

/// Environment variable naming the output directory when the config has none.
pub const OUTPUT_DIR_ENV: &str = "GGRPO_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "ggrpo-output";
pub const DEFAULT_ENTROPY_BAND: (f64, f64) = (0.15, 0.9);
pub const DEFAULT_ENVELOPE: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Compare,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Train => "train",
            Mode::Compare => "compare",
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<Mode>,
    output_dir: Option<PathBuf>,
    emit_plots_data: Option<bool>,
    trainer: Option<Spanned<TrainerSection>>,
    tasks: Vec<Spanned<TaskSection>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainerSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    group_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_groups: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clip_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ema_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stability_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dynamic_filter: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inner_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pool_per_task: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vocab_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    context_order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_ent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reward_weights: Option<WeightsSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsSection {
    accuracy: Option<f64>,
    length: Option<f64>,
    format: Option<f64>,
    structure: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSection {
    id: String,
    topology: String,
    target: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reward_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outlier_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outlier_magnitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    envelope: Option<[usize; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    entropy_bounds: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_ent: Option<f64>,
}

#[derive(Serialize)]
struct EchoConfig<'a> {
    mode: Mode,
    output_dir: &'a Path,
    emit_plots_data: bool,
    trainer: TrainerSection,
    tasks: Vec<TaskSection>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub emit_plots_data: bool,
    pub trainer: TrainerConfig,
    pub tasks: Vec<TaskSpec>,
}

struct Source<'a> {
    name: &'a str,
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())]
            .matches('\n')
            .count()
            + 1
    }

    fn error(&self, span: Range<usize>, msg: impl fmt::Display) -> CliError {
        CliError::Config(format!("{}:{}: {msg}", self.name, self.line(span)))
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("{}: cannot read config: {e}", path.display()))
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates config text; `name` labels diagnostics.
    pub fn parse(text: &str, name: &str) -> Result<Self, CliError> {
        let src = Source { name, text };
        let file: FileConfig = toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => src.error(span, e.message()),
            None => CliError::Config(format!("{name}: {}", e.message())),
        })?;

        let (trainer_section, trainer_span) = match &file.trainer {
            Some(t) => (t.get_ref().clone(), t.span()),
            None => (TrainerSection::default(), 0..0),
        };
        let trainer =
            trainer_config(&trainer_section).map_err(|m| src.error(trainer_span.clone(), m))?;
        trainer
            .validate()
            .map_err(|e| src.error(trainer_span.clone(), e))?;
        let lambda = trainer_section
            .lambda_ent
            .unwrap_or(ggrpo_core::shaping::DEFAULT_LAMBDA_ENT);
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(src.error(
                trainer_span,
                format!("lambda_ent must be non-negative, got {lambda}"),
            ));
        }

        if file.tasks.is_empty() {
            return Err(CliError::Config(format!(
                "{name}: `tasks` must contain at least one entry"
            )));
        }
        let tasks = file
            .tasks
            .iter()
            .map(|t| {
                task_spec(t.get_ref(), lambda, trainer.vocab_size)
                    .map_err(|m| src.error(t.span(), m))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Trainer::new(trainer.clone(), tasks.clone()).map_err(|e| src.error(trainer_span, e))?;

        let output_dir = file
            .output_dir
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        Ok(Self {
            mode: file.mode.unwrap_or(Mode::Train),
            output_dir,
            emit_plots_data: file.emit_plots_data.unwrap_or(true),
            trainer,
            tasks,
        })
    }

    /// The effective config as TOML, with every default written out.
    pub fn to_toml(&self) -> String {
        let t = &self.trainer;
        let w = &t.reward_weights;
        let trainer = TrainerSection {
            group_size: Some(t.group_size),
            batch_groups: Some(t.batch_groups),
            steps: Some(t.steps),
            learning_rate: Some(t.learning_rate),
            clip_epsilon: Some(t.clip_epsilon),
            ema_alpha: Some(t.ema_alpha),
            stability_epsilon: Some(t.stability_epsilon),
            estimator: Some(t.estimator.name().to_string()),
            dynamic_filter: Some(t.dynamic_filter),
            seed: Some(t.seed),
            inner_steps: Some(t.inner_steps),
            pool_per_task: Some(t.pool_per_task),
            vocab_size: Some(t.vocab_size),
            max_len: Some(t.max_len),
            context_order: Some(t.context_order),
            lambda_ent: None,
            reward_weights: Some(WeightsSection {
                accuracy: Some(w.accuracy),
                length: Some(w.length),
                format: Some(w.format),
                structure: Some(w.structure),
            }),
        };
        let tasks = self
            .tasks
            .iter()
            .map(|s| TaskSection {
                id: s.task_id.to_string(),
                topology: s.topology.name().to_string(),
                target: s.target.clone(),
                kind: None,
                reward_scale: Some(s.reward_scale),
                outlier_prob: Some(s.outlier_prob),
                outlier_magnitude: Some(s.outlier_magnitude),
                envelope: Some(s.envelope.thresholds()),
                entropy_bounds: Some([s.entropy_bounds.h_min(), s.entropy_bounds.h_max()]),
                lambda_ent: Some(s.entropy_bounds.lambda_ent()),
            })
            .collect();
        let echo = EchoConfig {
            mode: self.mode,
            output_dir: &self.output_dir,
            emit_plots_data: self.emit_plots_data,
            trainer,
            tasks,
        };
        toml::to_string(&echo).expect("config values are serialisable")
    }
}

fn trainer_config(s: &TrainerSection) -> Result<TrainerConfig, String> {
    let d = TrainerConfig::default();
    let estimator = match &s.estimator {
        Some(name) => name.parse::<Estimator>().map_err(|e| e.to_string())?,
        None => d.estimator,
    };
    let dw = d.reward_weights;
    let reward_weights = match &s.reward_weights {
        Some(w) => CompositeRewardWeights::new(
            w.accuracy.unwrap_or(dw.accuracy),
            w.length.unwrap_or(dw.length),
            w.format.unwrap_or(dw.format),
            w.structure.unwrap_or(dw.structure),
        )
        .map_err(|e| e.to_string())?,
        None => dw,
    };
    Ok(TrainerConfig {
        group_size: s.group_size.unwrap_or(d.group_size),
        batch_groups: s.batch_groups.unwrap_or(d.batch_groups),
        steps: s.steps.unwrap_or(d.steps),
        learning_rate: s.learning_rate.unwrap_or(d.learning_rate),
        clip_epsilon: s.clip_epsilon.unwrap_or(d.clip_epsilon),
        ema_alpha: s.ema_alpha.unwrap_or(d.ema_alpha),
        stability_epsilon: s.stability_epsilon.unwrap_or(d.stability_epsilon),
        estimator,
        dynamic_filter: s.dynamic_filter.unwrap_or(d.dynamic_filter),
        seed: s.seed.unwrap_or(d.seed),
        inner_steps: s.inner_steps.unwrap_or(d.inner_steps),
        pool_per_task: s.pool_per_task.unwrap_or(d.pool_per_task),
        vocab_size: s.vocab_size.unwrap_or(d.vocab_size),
        max_len: s.max_len.unwrap_or(d.max_len),
        context_order: s.context_order.unwrap_or(d.context_order),
        reward_weights,
    })
}

fn task_kind(name: &str) -> Result<TaskKind, String> {
    match name {
        "reasoning" => Ok(TaskKind::Reasoning),
        "vision-centric" => Ok(TaskKind::VisionCentric),
        "hybrid" => Ok(TaskKind::Hybrid),
        _ => Err(format!(
            "unknown task kind `{name}` (expected reasoning, vision-centric or hybrid)"
        )),
    }
}

fn task_spec(s: &TaskSection, default_lambda: f64, vocab_size: usize) -> Result<TaskSpec, String> {
    if s.id.is_empty()
        || !s
            .id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
    {
        return Err(format!(
            "task id `{}` must be non-empty and use only letters, digits, `-`, `_` or `.`",
            s.id
        ));
    }
    let ctx = |msg: String| format!("task `{}`: {msg}", s.id);
    let topology: Topology = s
        .topology
        .parse()
        .map_err(|e: ggrpo_core::Error| ctx(e.to_string()))?;
    if let Some(&bad) = s.target.iter().find(|&&x| x == 0 || x >= vocab_size) {
        return Err(ctx(format!("target symbol {bad} outside 1..{vocab_size}")));
    }
    let kind = s.kind.as_deref().map(task_kind).transpose().map_err(ctx)?;
    let envelope = match (s.envelope, kind) {
        (Some([a, b, c, d]), _) => {
            LengthEnvelope::new(a, b, c, d).map_err(|e| ctx(e.to_string()))?
        }
        (None, Some(k)) => k.default_envelope(),
        (None, None) => {
            let [a, b, c, d] = DEFAULT_ENVELOPE;
            LengthEnvelope::new(a, b, c, d).expect("default envelope is valid")
        }
    };
    let lambda = s.lambda_ent.unwrap_or(default_lambda);
    let (lo, hi) = match (s.entropy_bounds, kind) {
        (Some([lo, hi]), _) => (lo, hi),
        (None, Some(k)) => {
            let b = k.default_entropy_bounds();
            (b.h_min(), b.h_max())
        }
        (None, None) => DEFAULT_ENTROPY_BAND,
    };
    let entropy_bounds = EntropyBounds::new(lo, hi, lambda).map_err(|e| ctx(e.to_string()))?;
    let mut spec = TaskSpec::new(s.id.as_str(), topology, s.target.clone());
    spec.reward_scale = s.reward_scale.unwrap_or(spec.reward_scale);
    spec.outlier_prob = s.outlier_prob.unwrap_or(spec.outlier_prob);
    spec.outlier_magnitude = s.outlier_magnitude.unwrap_or(spec.outlier_magnitude);
    spec.envelope = envelope;
    spec.entropy_bounds = entropy_bounds;
    spec.validate().map_err(|e| ctx(e.to_string()))?;
    Ok(spec)
}
