//! CSV and summary writers.
//!
//! Floats are written with 17 significant digits so values round-trip;
//! undefined statistics are left empty.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ggrpo_core::simulator::{
    mean_reward_over, ComparisonReport, EstimatorRun, StepMetrics, TaskSpec, FINAL_WINDOW,
};
use ggrpo_core::TaskId;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const METRICS_COLUMNS: [&str; 15] = [
    "step",
    "task_id",
    "mean_reward",
    "adv_mean",
    "adv_var",
    "w2",
    "entropy",
    "mean_length",
    "filtered_groups",
    "adv_max",
    "ema_sigma",
    "distinct_rewards",
    "surrogate",
    "total_loss",
    "grad_norm",
];

/// Task label of the per-step aggregate row.
pub const GLOBAL_ROW: &str = "all";

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// One row per (step, task) followed by the step's global row.
pub fn metrics_csv(metrics: &[StepMetrics]) -> String {
    let rows = metrics.iter().flat_map(|m| {
        let step = m.step.to_string();
        let per_task = m.tasks.iter().map(move |t| {
            vec![
                m.step.to_string(),
                t.task_id.to_string(),
                format_float(t.mean_reward),
                opt(t.adv_mean),
                opt(t.adv_var),
                opt(t.w2),
                format_float(t.entropy),
                format_float(t.mean_length),
                t.filtered_groups.to_string(),
                opt(t.adv_max),
                opt(t.ema_sigma),
                t.distinct_rewards.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ]
        });
        let global = vec![
            step,
            GLOBAL_ROW.to_string(),
            format_float(mean(m.tasks.iter().map(|t| t.mean_reward))),
            String::new(),
            String::new(),
            String::new(),
            format_float(mean(m.tasks.iter().map(|t| t.entropy))),
            format_float(mean(m.tasks.iter().map(|t| t.mean_length))),
            m.filtered_groups().to_string(),
            String::new(),
            String::new(),
            m.all_distinct().to_string(),
            format_float(m.surrogate),
            format_float(m.total_loss),
            format_float(m.grad_norm),
        ];
        per_task.chain(std::iter::once(global)).collect::<Vec<_>>()
    });
    csv(&METRICS_COLUMNS, rows)
}

pub fn length_dynamics_csv(metrics: &[StepMetrics]) -> String {
    let rows = metrics.iter().flat_map(|m| {
        m.tasks.iter().map(move |t| {
            vec![
                m.step.to_string(),
                t.task_id.to_string(),
                format_float(t.mean_length),
            ]
        })
    });
    csv(&["step", "task_id", "mean_length"], rows)
}

pub fn entropy_dynamics_csv(metrics: &[StepMetrics], tasks: &[TaskSpec]) -> String {
    let rows = metrics.iter().flat_map(|m| {
        m.tasks.iter().map(move |t| {
            let band = tasks
                .iter()
                .find(|s| s.task_id == t.task_id)
                .map(|s| s.entropy_bounds);
            vec![
                m.step.to_string(),
                t.task_id.to_string(),
                format_float(t.entropy),
                opt(band.map(|b| b.h_min())),
                opt(band.map(|b| b.h_max())),
                t.in_band.to_string(),
            ]
        })
    });
    csv(
        &["step", "task_id", "entropy", "h_min", "h_max", "in_band"],
        rows,
    )
}

pub fn reward_curves_csv(metrics: &[StepMetrics]) -> String {
    let rows = metrics.iter().enumerate().flat_map(|(i, m)| {
        let window = &metrics[(i + 1).saturating_sub(FINAL_WINDOW)..=i];
        m.tasks.iter().map(move |t| {
            vec![
                m.step.to_string(),
                t.task_id.to_string(),
                format_float(t.mean_reward),
                opt(mean_reward_over(window, &t.task_id)),
            ]
        })
    });
    csv(
        &["step", "task_id", "mean_reward", "trailing_mean_reward"],
        rows,
    )
}

fn write(
    dir: &Path,
    name: &str,
    contents: &str,
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

/// Writes `metrics.csv` and, when requested, the plot data files.
pub fn write_metrics(
    dir: &Path,
    metrics: &[StepMetrics],
    tasks: &[TaskSpec],
    plots: bool,
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    create_dir(dir)?;
    write(dir, "metrics.csv", &metrics_csv(metrics), written)?;
    if plots {
        write(
            dir,
            "length_dynamics.csv",
            &length_dynamics_csv(metrics),
            written,
        )?;
        write(
            dir,
            "entropy_dynamics.csv",
            &entropy_dynamics_csv(metrics, tasks),
            written,
        )?;
        write(
            dir,
            "reward_curves.csv",
            &reward_curves_csv(metrics),
            written,
        )?;
    }
    Ok(())
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn run_lines(out: &mut String, metrics: &[StepMetrics], tasks: &[TaskSpec]) {
    let tail = &metrics[metrics.len().saturating_sub(FINAL_WINDOW)..];
    let _ = writeln!(out, "# steps: {}", metrics.len());
    for task in tasks {
        let id = &task.task_id;
        let w2: Vec<f64> = metrics
            .iter()
            .filter_map(|m| m.task(id).and_then(|t| t.w2))
            .collect();
        let _ = writeln!(
            out,
            "#   {id}: final mean reward {} | w2 first {} last {}",
            opt(mean_reward_over(tail, id)),
            opt(w2.first().copied()),
            opt(w2.last().copied()),
        );
    }
    let ratios: Vec<f64> = metrics
        .iter()
        .filter_map(StepMetrics::equity_ratio)
        .collect();
    let _ = writeln!(
        out,
        "#   equity ratio: final {} | median {}",
        opt(metrics.last().and_then(StepMetrics::equity_ratio)),
        opt(median(ratios)),
    );
    let violations: usize = metrics.iter().map(StepMetrics::entropy_violations).sum();
    let _ = writeln!(
        out,
        "#   entropy band violations: {violations} of {}",
        metrics.len() * tasks.len()
    );
}

fn config_echo(out: &mut String, cfg: &ExperimentConfig) {
    out.push_str(
        "#\n# Effective configuration. Pass this file to `ggrpo run` to repeat the run.\n\n",
    );
    out.push_str(&cfg.to_toml());
}

pub fn train_summary(cfg: &ExperimentConfig, metrics: &[StepMetrics]) -> String {
    let mut out = String::from("# ggrpo training summary\n");
    let _ = writeln!(out, "# estimator: {}", cfg.trainer.estimator);
    run_lines(&mut out, metrics, &cfg.tasks);
    config_echo(&mut out, cfg);
    out
}

pub fn compare_summary(cfg: &ExperimentConfig, report: &ComparisonReport) -> String {
    let mut out = String::from("# ggrpo estimator comparison\n");
    for run in &report.runs {
        let _ = writeln!(out, "# [{}]", run.estimator);
        run_lines(&mut out, &run.metrics, &cfg.tasks);
        let _ = writeln!(out, "#   max advantage: {}", opt(run.max_advantage()));
        if let Some(s) = run.outlier_sensitivity() {
            let _ = writeln!(
                out,
                "#   outlier max-advantage delta: {}",
                format_float(s.max_advantage_delta)
            );
            for (id, d) in &s.final_reward_delta {
                let _ = writeln!(
                    out,
                    "#   outlier final-reward delta {id}: {}",
                    format_float(*d)
                );
            }
        }
    }
    config_echo(&mut out, cfg);
    out
}

pub fn comparison_csv(report: &ComparisonReport, tasks: &[TaskSpec]) -> String {
    let row = |run: &EstimatorRun, id: &TaskId| {
        let finals = run.final_mean_rewards();
        let sens = run.outlier_sensitivity();
        let w2 = run.w2_trajectory(id).into_iter().flatten().last();
        let task_max = run
            .metrics
            .iter()
            .filter_map(|m| m.task(id).and_then(|t| t.adv_max))
            .reduce(f64::max);
        let ratios: Vec<f64> = run.equity_ratios().into_iter().flatten().collect();
        vec![
            run.estimator.to_string(),
            id.to_string(),
            opt(finals.get(id).copied()),
            opt(task_max),
            opt(w2),
            opt(median(ratios)),
            opt(sens.as_ref().map(|s| s.max_advantage_delta)),
            opt(sens
                .as_ref()
                .and_then(|s| s.final_reward_delta.get(id).copied())),
        ]
    };
    let rows = report
        .runs
        .iter()
        .flat_map(|run| tasks.iter().map(move |t| row(run, &t.task_id)));
    csv(
        &[
            "estimator",
            "task_id",
            "final_mean_reward",
            "max_advantage",
            "final_w2",
            "median_equity_ratio",
            "outlier_max_advantage_delta",
            "outlier_final_reward_delta",
        ],
        rows,
    )
}

pub fn write_summary(
    dir: &Path,
    contents: &str,
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    write(dir, "summary.txt", contents, written)
}

pub fn write_comparison(
    dir: &Path,
    contents: &str,
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    write(dir, "comparison.csv", contents, written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ggrpo_core::simulator::TaskMetrics;

    fn step(s: usize) -> StepMetrics {
        let t = TaskMetrics {
            task_id: TaskId::new("a"),
            groups: 2,
            mean_reward: 0.25,
            adv_mean: Some(0.0),
            adv_var: None,
            adv_max: Some(1.5),
            w2: Some(0.01),
            entropy: 1.0,
            in_band: false,
            mean_length: 3.0,
            filtered_groups: 1,
            distinct_rewards: false,
            ema_sigma: None,
        };
        StepMetrics {
            step: s,
            tasks: vec![t],
            surrogate: 0.5,
            total_loss: -0.5,
            grad_norm: 2.0,
        }
    }

    #[test]
    fn every_row_has_every_column() {
        let text = metrics_csv(&[step(0), step(1)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], METRICS_COLUMNS.join(","));
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), METRICS_COLUMNS.len());
        }
        assert!(lines[1].starts_with("0,a,2.5000000000000000e-1,0.0000000000000000e0,,"));
        assert!(lines[2].starts_with("0,all,"));
    }

    #[test]
    fn empty_runs_have_headers_only() {
        assert_eq!(metrics_csv(&[]), format!("{}\n", METRICS_COLUMNS.join(",")));
        assert_eq!(reward_curves_csv(&[]).lines().count(), 1);
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }
}
