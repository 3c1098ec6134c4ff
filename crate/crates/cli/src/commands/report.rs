use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use metacog_core::baselines::{default_threshold_grid, fit_threshold, ThresholdPolicy};
use metacog_core::evaluate::{ModelKind, RunEvaluation};
use metacog_core::metrics::{
    chance_accuracy, default_noise_grid, rolling_accuracy_by_noise, MseBreakdown, NoisySample, RollingPoint,
};
use metacog_core::model::{DetectionStats, WorldState};

use super::run::read_results;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::table::{Cell, Table};

pub const NOISE_HALFWIDTH: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub tables: Vec<PathBuf>,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

fn fraction(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

fn labelled<'a>(runs: impl Iterator<Item = &'a RunEvaluation>) -> Vec<(DetectionStats, WorldState)> {
    runs.flat_map(|r| (0..r.len()).map(move |t| (r.stats(t), r.truth[t]))).collect()
}

fn threshold_score(runs: &[&RunEvaluation], theta: f64) -> (usize, usize) {
    let policy = ThresholdPolicy { theta, strict: false };
    runs.iter()
        .flat_map(|r| r.threshold_accuracy(&policy))
        .fold((0, 0), |(hits, n), b| (hits + usize::from(b), n + 1))
}

/// Fails unless every run carries every requested model.
fn check_models(runs: &[RunEvaluation], models: &[ModelKind]) -> CliResult<()> {
    let absent: BTreeSet<ModelKind> = models
        .iter()
        .copied()
        .filter(|m| runs.iter().any(|r| !r.predictions.contains_key(m)))
        .collect();
    if absent.is_empty() {
        return Ok(());
    }
    let names: Vec<&str> = absent.iter().map(|m| m.name()).collect();
    Err(CliError::Input(format!("results lack models: {}", names.join(", "))))
}

fn mse_row(t: usize, xs: &[MseBreakdown]) -> Vec<Cell> {
    let n = xs.len();
    vec![
        t.into(),
        mean(xs.iter().map(|m| m.fa).sum(), n).into(),
        mean(xs.iter().map(|m| m.miss).sum(), n).into(),
        mean(xs.iter().map(|m| m.combined).sum(), n).into(),
        n.into(),
    ]
}

/// Row `t = 0` is the error of the prior particles before any observation.
fn mse_table(runs: &[RunEvaluation]) -> Table {
    let mut table = Table::new("mse_by_observation", &["t", "fa", "miss", "combined", "runs"]);
    let initial: Vec<MseBreakdown> = runs.iter().filter_map(|r| r.initial_mse).collect();
    if !initial.is_empty() {
        table.push(mse_row(0, &initial));
    }
    let horizon = runs.iter().map(|r| r.mse.len()).max().unwrap_or(0);
    for t in 0..horizon {
        let at: Vec<MseBreakdown> = runs.iter().filter_map(|r| r.mse.get(t).copied()).collect();
        table.push(mse_row(t + 1, &at));
    }
    table
}

fn accuracy_table(runs: &[RunEvaluation], models: &[ModelKind], fitted: f64) -> Table {
    let mut columns = vec!["t".to_string()];
    columns.extend(models.iter().map(|m| m.name().to_string()));
    columns.extend(["fitted_threshold".to_string(), "runs".to_string()]);
    let mut table = Table::with_columns("accuracy_by_observation", columns);
    let bits: Vec<Vec<Vec<u8>>> = runs
        .iter()
        .map(|r| {
            let mut per_model: Vec<Vec<u8>> = models.iter().map(|&m| r.accuracy(m).unwrap_or_default()).collect();
            per_model.push(r.threshold_accuracy(&ThresholdPolicy { theta: fitted, strict: false }));
            per_model
        })
        .collect();
    let horizon = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    for t in 0..horizon {
        let present: Vec<&Vec<Vec<u8>>> = bits.iter().zip(runs).filter(|(_, r)| t < r.len()).map(|(b, _)| b).collect();
        let n = present.len();
        let mut row: Vec<Cell> = vec![(t + 1).into()];
        for m in 0..=models.len() {
            let hits: usize = present.iter().map(|b| usize::from(b[m][t])).sum();
            row.push(fraction(hits, n).into());
        }
        row.push(n.into());
        table.push(row);
    }
    table
}

fn noise_samples(runs: &[RunEvaluation], models: &[ModelKind]) -> Vec<NoisySample> {
    runs.iter()
        .flat_map(|r| {
            let bits: Vec<Vec<u8>> = models.iter().map(|&m| r.accuracy(m).unwrap_or_default()).collect();
            (0..r.len()).map(move |t| NoisySample { zeta: r.zeta[t], correct: bits.iter().map(|b| b[t] == 1).collect() })
        })
        .collect()
}

fn noise_table(curve: &[RollingPoint], models: &[ModelKind]) -> Table {
    let mut columns = vec!["zeta".to_string()];
    columns.extend(models.iter().map(|m| m.name().to_string()));
    columns.push("count".into());
    let mut table = Table::with_columns("accuracy_by_noise", columns);
    for p in curve {
        let mut row: Vec<Cell> = vec![p.zeta.into()];
        row.extend(p.accuracy.iter().map(|&a| Cell::from(a)));
        row.push(p.count.into());
        table.push(row);
    }
    table
}

fn gap_table(curve: &[RollingPoint], models: &[ModelKind]) -> Option<(Table, Option<(f64, f64)>)> {
    let retro = models.iter().position(|&m| m == ModelKind::Retrospective)?;
    let thresh = models.iter().position(|&m| m == ModelKind::Threshold)?;
    let mut table = Table::new("retrospective_minus_threshold", &["zeta", "difference", "count"]);
    let mut peak: Option<(f64, f64)> = None;
    for p in curve {
        let d = p.accuracy[retro] - p.accuracy[thresh];
        if peak.is_none_or(|(_, best)| d > best) {
            peak = Some((p.zeta, d));
        }
        table.push(vec![p.zeta.into(), d.into(), p.count.into()]);
    }
    Some((table, peak))
}

/// Error map of one run: each (model, observation, category) cell is
/// `correct`, `missed` or `false_alarm`.
fn error_map(run: &RunEvaluation, models: &[ModelKind]) -> Table {
    let mut table = Table::new(&format!("error_map_run{}", run.run_id), &["model", "t", "category", "cell"]);
    for &m in models {
        let Some(pred) = run.predictions.get(&m) else { continue };
        for (t, (w_hat, w)) in pred.iter().zip(&run.truth).enumerate() {
            for c in 0..run.categories {
                let cell = match (w.contains(c), w_hat.contains(c)) {
                    (true, false) => "missed",
                    (false, true) => "false_alarm",
                    _ => "correct",
                };
                table.push(vec![m.name().into(), (t + 1).into(), c.into(), cell.into()]);
            }
        }
    }
    table
}

/// Aggregates a results file into the report tables under the configured
/// output directory.
pub fn cmd_report(config: &ExperimentConfig, results: &Path, run_id: Option<u64>) -> CliResult<ReportOutput> {
    let (header, mut runs) = read_results(results)?;
    if runs.is_empty() {
        return Err(CliError::Input(format!("{} holds no runs", results.display())));
    }
    runs.sort_by_key(|r| r.run_id);
    let models = config.models.clone();
    if models.is_empty() {
        return Err(CliError::Config("models must name at least one model".into()));
    }
    check_models(&runs, &models)?;
    fs::create_dir_all(&config.out).map_err(CliError::io(&config.out))?;
    let save = |t: &Table| t.save(&config.out, config.format);
    let mut written = Vec::new();

    let all: Vec<&RunEvaluation> = runs.iter().collect();
    let grid = default_threshold_grid();
    let (theta, fitted_acc) = fit_threshold(&labelled(all.iter().copied()), &grid)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let (even, odd): (Vec<&RunEvaluation>, Vec<&RunEvaluation>) = all.iter().partition(|r| r.run_id % 2 == 0);
    let held_out = if even.is_empty() || odd.is_empty() {
        None
    } else {
        let (theta_even, _) =
            fit_threshold(&labelled(even.iter().copied()), &grid).map_err(|e| CliError::Input(e.to_string()))?;
        let (hits, n) = threshold_score(&odd, theta_even);
        Some((theta_even, fraction(hits, n), n))
    };
    let mut fit = Table::new("fitted_threshold", &["split", "theta", "accuracy", "observations"]);
    let total = threshold_score(&all, theta).1;
    fit.push(vec!["all".into(), theta.into(), fitted_acc.into(), total.into()]);
    if let Some((t, acc, n)) = held_out {
        fit.push(vec!["held_out".into(), t.into(), acc.into(), n.into()]);
    }

    let mse = mse_table(&runs);
    let accuracy = accuracy_table(&runs, &models, theta);
    let samples = noise_samples(&runs, &models);
    let curve = rolling_accuracy_by_noise(&samples, NOISE_HALFWIDTH, &default_noise_grid())
        .map_err(|e| CliError::Input(e.to_string()))?;
    let noise = noise_table(&curve, &models);
    let gap = gap_table(&curve, &models);

    let mut summary = Table::new("summary", &["metric", "value"]);
    let observations = samples.len();
    summary.push(vec!["runs".into(), runs.len().into()]);
    summary.push(vec!["observations".into(), observations.into()]);
    for &m in &models {
        let hits: usize = runs.iter().flat_map(|r| r.accuracy(m).unwrap_or_default()).map(usize::from).sum();
        summary.push(vec![format!("accuracy_{}", m.name()).as_str().into(), fraction(hits, observations).into()]);
    }
    summary.push(vec!["fitted_threshold_theta".into(), theta.into()]);
    summary.push(vec!["fitted_threshold_accuracy".into(), fitted_acc.into()]);
    if let Some((t, acc, _)) = held_out {
        summary.push(vec!["held_out_threshold_theta".into(), t.into()]);
        summary.push(vec!["held_out_threshold_accuracy".into(), acc.into()]);
    }
    if let Some((_, Some((z, d)))) = &gap {
        summary.push(vec!["peak_gap_zeta".into(), (*z).into()]);
        summary.push(vec!["peak_gap".into(), (*d).into()]);
    }
    if models.contains(&ModelKind::Online) {
        let rates: Vec<f64> = runs.iter().map(|r| r.acceptance_rate).collect();
        summary.push(vec!["mean_acceptance_rate".into(), mean(rates.iter().sum(), rates.len()).into()]);
    }
    let prior = (
        header.config["categories"].as_u64(),
        header.config["poisson_lambda"].as_f64(),
        header.config["count_min"].as_u64(),
        header.config["count_max"].as_u64(),
    );
    if let (Some(c), Some(lambda), Some(lo), Some(hi)) = prior {
        if let Ok(chance) = chance_accuracy(c as usize, lambda, (lo as u32, hi as u32)) {
            summary.push(vec!["chance_accuracy".into(), chance.into()]);
        }
    }

    written.push(save(&mse)?);
    written.push(save(&accuracy)?);
    written.push(save(&fit)?);
    written.push(save(&noise)?);
    if let Some((table, _)) = &gap {
        written.push(save(table)?);
    }
    written.push(save(&summary)?);
    if let Some(id) = run_id {
        let run = runs
            .iter()
            .find(|r| r.run_id == id)
            .ok_or_else(|| CliError::Input(format!("run {id} is not in {}", results.display())))?;
        written.push(save(&error_map(run, &models))?);
    }
    info!("wrote {} tables to {}", written.len(), config.out.display());
    Ok(ReportOutput { tables: written })
}
