//! The `simulate` subcommand: seeded trials, per-trial trajectory CSVs,
//! a convergence summary, and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use cpca::dynamics::{initial_chain, run_chain, ChainRun, Sample, TerminationStatus};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::manifest::{write_json, RunManifest};

pub const CSV_HEADER: [&str; 6] = ["step", "stage", "vec_err", "val_err", "w_norm", "l"];

#[derive(Debug, Clone, Serialize)]
pub struct StageOutcome {
    pub stage: usize,
    pub status: TerminationStatus,
    pub steps: usize,
    pub vec_err: f64,
    pub val_err: f64,
    pub w_norm: f64,
    pub l: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub stages: Vec<StageOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageStatistics {
    pub stage: usize,
    pub trials: usize,
    pub converged: usize,
    pub status_counts: BTreeMap<TerminationStatus, usize>,
    pub max_vec_err: f64,
    pub max_val_err: f64,
    pub median_vec_err: f64,
    pub median_val_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub stages: Vec<StageStatistics>,
    pub per_trial: Vec<TrialSummary>,
}

/// Runs the experiment into `out`. The manifest is written whether or not
/// the run succeeds.
pub fn simulate(config: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let result = run(config, out);
    let mut manifest = RunManifest::new("simulate", serde_json::to_value(config)?);
    match &result {
        Ok((artifacts, summary)) => {
            manifest.artifacts = artifacts.clone();
            manifest.statuses = summary
                .per_trial
                .iter()
                .map(|t| t.stages.iter().map(|s| s.status).collect())
                .collect();
        }
        Err(e) => {
            manifest.artifacts = existing_artifacts(out);
            manifest.error = Some(format!("{e:#}"));
        }
    }
    manifest.finish(out, start)?;
    result.map(|_| manifest)
}

fn run(config: &ExperimentConfig, out: &Path) -> Result<(Vec<PathBuf>, Summary)> {
    let model = config.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("model.json"), model.to_json()).context("writing model.json")?;
    let (m, pinned) = config.chain_shape();

    let trials: Vec<(PathBuf, TrialSummary)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| -> Result<_> {
            let seed = config.base_seed.wrapping_add(trial as u64);
            let chain = initial_chain(&model, m, pinned, &config.init, seed)?;
            let run = run_chain(&model, config.rule, &chain, pinned, config.scheme, &config.integrator)?;
            let name = PathBuf::from(format!("trial_{trial:04}.csv"));
            write_trajectory(&out.join(&name), &run)?;
            Ok((name, summarize_trial(trial, seed, &run)))
        })
        .collect::<Result<_>>()?;

    let (mut artifacts, per_trial): (Vec<_>, Vec<_>) = trials.into_iter().unzip();
    let summary = summarize(per_trial);
    write_json(&out.join("summary.json"), &summary)?;
    artifacts.insert(0, PathBuf::from("model.json"));
    artifacts.push(PathBuf::from("summary.json"));
    Ok((artifacts, summary))
}

fn existing_artifacts(out: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(out)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok())
        .map(|e| PathBuf::from(e.file_name()))
        .filter(|p| p != Path::new(crate::manifest::MANIFEST_FILE))
        .collect();
    files.sort();
    files
}

/// Full-precision float formatting with '.' as decimal separator.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_trajectory(path: &Path, run: &ChainRun) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(CSV_HEADER)?;
    for record in &run.records {
        for s in &record.samples {
            writer.write_record(sample_row(s))?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn sample_row(s: &Sample) -> [String; 6] {
    [
        s.step.to_string(),
        s.stage.to_string(),
        format_float(s.vec_err),
        format_float(s.val_err),
        format_float(s.w_norm),
        format_float(s.l),
    ]
}

fn summarize_trial(trial: usize, seed: u64, run: &ChainRun) -> TrialSummary {
    let stages = run
        .records
        .iter()
        .map(|r| {
            let last = r.last().copied().unwrap_or(Sample {
                step: 0,
                stage: r.stage,
                vec_err: f64::NAN,
                val_err: f64::NAN,
                w_norm: r.final_state.w.norm(),
                l: r.final_state.l,
            });
            StageOutcome {
                stage: r.stage,
                status: r.status,
                steps: r.steps,
                vec_err: last.vec_err,
                val_err: last.val_err,
                w_norm: last.w_norm,
                l: last.l,
            }
        })
        .collect();
    TrialSummary { trial, seed, stages }
}

fn median(mut values: Vec<f64>) -> f64 {
    values.retain(|x| !x.is_nan());
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len().is_multiple_of(2) {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    }
}

fn summarize(per_trial: Vec<TrialSummary>) -> Summary {
    let stage_ids: Vec<usize> = per_trial.first().map(|t| t.stages.iter().map(|s| s.stage).collect()).unwrap_or_default();
    let stages = stage_ids
        .iter()
        .enumerate()
        .map(|(k, &stage)| {
            let outcomes: Vec<&StageOutcome> = per_trial.iter().map(|t| &t.stages[k]).collect();
            let mut status_counts = BTreeMap::new();
            for o in &outcomes {
                *status_counts.entry(o.status).or_insert(0) += 1;
            }
            let vec_errs: Vec<f64> = outcomes.iter().map(|o| o.vec_err).collect();
            let val_errs: Vec<f64> = outcomes.iter().map(|o| o.val_err).collect();
            StageStatistics {
                stage,
                trials: outcomes.len(),
                converged: status_counts.get(&TerminationStatus::Converged).copied().unwrap_or(0),
                status_counts,
                max_vec_err: vec_errs.iter().copied().fold(f64::NAN, f64::max),
                max_val_err: val_errs.iter().copied().fold(f64::NAN, f64::max),
                median_vec_err: median(vec_errs),
                median_val_err: median(val_errs),
            }
        })
        .collect();
    Summary {
        trials: per_trial.len(),
        stages,
        per_trial,
    }
}
