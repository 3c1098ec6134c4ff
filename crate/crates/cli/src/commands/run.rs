use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use metacog_core::dataset::{CorpusReader, Run, SCHEMA_VERSION};
use metacog_core::evaluate::{evaluate_run, EvaluationConfig, RunEvaluation};
use metacog_core::Error as CoreError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::synth::sha256_file;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "run_summary.json";

/// First line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsHeader {
    pub kind: String,
    pub schema: u32,
    pub corpus_sha256: String,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub results: PathBuf,
    /// Runs present in the results file after this invocation.
    pub runs: usize,
    /// Runs already present when the invocation started.
    #[serde(skip)]
    pub resumed: usize,
    pub skipped_run_ids: Vec<u64>,
    pub malformed_lines: Vec<usize>,
    pub complete: bool,
}

/// Adopts the corpus's prior, category count and shape, which are
/// authoritative for inference.
fn effective_config(config: &ExperimentConfig, reader_header: &metacog_core::dataset::CorpusHeader) -> ExperimentConfig {
    let mut effective = config.clone();
    if effective.categories != reader_header.categories || effective.prior != reader_header.prior {
        info!("using the corpus prior and category count ({} categories)", reader_header.categories);
    }
    effective.categories = reader_header.categories;
    effective.prior = reader_header.prior.clone();
    effective.num_systems = reader_header.num_systems;
    effective.world_states_per_system = reader_header.world_states_per_system;
    effective
}

fn open_corpus(path: &Path) -> CliResult<CorpusReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Input(format!("corpus {} not found", path.display())),
        _ => CliError::io(path)(e),
    })?;
    CorpusReader::new(BufReader::new(file)).map_err(CliError::reading(path))
}

/// Reads completed records from an interrupted results file and truncates a
/// trailing partial line. Returns the run ids already done.
fn recover(path: &Path, header_line: &str) -> CliResult<BTreeSet<u64>> {
    let mut file = OpenOptions::new().read(true).write(true).open(path).map_err(CliError::io(path))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(CliError::io(path))?;
    let mut done = BTreeSet::new();
    let mut keep = 0usize;
    let mut first = true;
    for line in bytes.split_inclusive(|&b| b == b'\n') {
        if line.last() != Some(&b'\n') {
            break;
        }
        let body = &line[..line.len() - 1];
        if first {
            if body != header_line.as_bytes() {
                return Err(CliError::Config(format!(
                    "{} was produced from a different corpus or configuration; remove it or pick another --out",
                    path.display()
                )));
            }
            first = false;
        } else {
            match serde_json::from_slice::<RunEvaluation>(body) {
                Ok(eval) => {
                    done.insert(eval.run_id);
                }
                Err(_) => break,
            }
        }
        keep += line.len();
    }
    if first {
        keep = 0;
    }
    if keep < bytes.len() {
        warn!("discarding {} bytes of an incomplete record in {}", bytes.len() - keep, path.display());
    }
    file.set_len(keep as u64).map_err(CliError::io(path))?;
    file.seek(SeekFrom::End(0)).map_err(CliError::io(path))?;
    Ok(done)
}

fn evaluate_batch(batch: &[Run], config: &EvaluationConfig, pool: &rayon::ThreadPool) -> Vec<(u64, Result<RunEvaluation, CoreError>)> {
    pool.install(|| batch.par_iter().map(|run| (run.run_id, evaluate_run(run, config))).collect())
}

/// Evaluates every run of the corpus into `<out>/results.jsonl`, resuming
/// from any records already there.
pub fn cmd_run(config: &ExperimentConfig, corpus: &Path) -> CliResult<RunSummary> {
    config.validate()?;
    let corpus_sha256 = match sha256_file(corpus) {
        Err(CliError::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::Input(format!("corpus {} not found", corpus.display())));
        }
        other => other?,
    };
    let mut reader = open_corpus(corpus)?;
    let config = effective_config(config, reader.header());
    config.validate()?;
    let evaluation = config.evaluation();

    fs::create_dir_all(&config.out).map_err(CliError::io(&config.out))?;
    let results = config.out.join(RESULTS_FILE);
    let header = ResultsHeader {
        kind: "results".into(),
        schema: SCHEMA_VERSION,
        corpus_sha256,
        config: config.echo(),
    };
    let header_line = serde_json::to_string(&header).expect("header serializes");
    let done = if results.exists() { recover(&results, &header_line)? } else { BTreeSet::new() };
    let resumed = done.len();
    if resumed > 0 {
        info!("resuming: {resumed} runs already evaluated");
    }
    let file = OpenOptions::new().create(true).append(true).open(&results).map_err(CliError::io(&results))?;
    let mut out = BufWriter::new(file);
    if fs::metadata(&results).map_err(CliError::io(&results))?.len() == 0 {
        writeln!(out, "{header_line}").map_err(CliError::io(&results))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", config.jobs)))?;
    let batch_size = (config.jobs * 4).max(8);
    let mut skipped = Vec::new();
    let mut malformed = Vec::new();
    let mut written = resumed;
    let mut batch: Vec<Run> = Vec::with_capacity(batch_size);
    let mut exhausted = false;
    while !exhausted {
        batch.clear();
        while batch.len() < batch_size {
            match reader.next() {
                None => {
                    exhausted = true;
                    break;
                }
                Some(Ok(run)) if done.contains(&run.run_id) => {}
                Some(Ok(run)) => batch.push(run),
                Some(Err(CoreError::Run { run_id, message })) => {
                    warn!("skipping corrupted run {run_id}: {message}");
                    skipped.push(run_id);
                }
                Some(Err(CoreError::Malformed { line, message })) => {
                    warn!("skipping unreadable corpus line {line}: {message}");
                    malformed.push(line);
                }
                Some(Err(CoreError::Io(source))) => return Err(CliError::Io { path: corpus.into(), source }),
                Some(Err(other)) => return Err(CliError::Input(format!("{}: {other}", corpus.display()))),
            }
        }
        for (run_id, outcome) in evaluate_batch(&batch, &evaluation, &pool) {
            match outcome {
                Ok(eval) => {
                    serde_json::to_writer(&mut out, &eval).map_err(|e| CliError::io(&results)(e.into()))?;
                    out.write_all(b"\n").map_err(CliError::io(&results))?;
                    written += 1;
                }
                Err(e) => {
                    warn!("skipping run {run_id}: {e}");
                    skipped.push(run_id);
                }
            }
        }
        out.flush().map_err(CliError::io(&results))?;
        if !batch.is_empty() {
            info!("{written} runs evaluated");
        }
    }

    let summary = RunSummary {
        results: results.clone(),
        runs: written,
        resumed,
        complete: skipped.is_empty() && malformed.is_empty(),
        skipped_run_ids: skipped,
        malformed_lines: malformed,
    };
    if !summary.complete {
        warn!(
            "{} corrupted runs and {} unreadable lines were skipped",
            summary.skipped_run_ids.len(),
            summary.malformed_lines.len()
        );
    }
    let path = config.out.join(SUMMARY_FILE);
    let body = json!({
        "kind": "run_summary",
        "runs": summary.runs,
        "skipped_run_ids": summary.skipped_run_ids,
        "malformed_lines": summary.malformed_lines,
        "complete": summary.complete,
    });
    let mut text = serde_json::to_string_pretty(&body).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(CliError::io(&path))?;
    Ok(summary)
}

/// Loads a results file: its header and every run record.
pub fn read_results(path: &Path) -> CliResult<(ResultsHeader, Vec<RunEvaluation>)> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Input(format!("results {} not found", path.display())),
        _ => CliError::io(path)(e),
    })?;
    let mut lines = BufReader::new(file).lines();
    let header: ResultsHeader = match lines.next() {
        None => return Err(CliError::Input(format!("{} is empty", path.display()))),
        Some(line) => {
            let line = line.map_err(CliError::io(path))?;
            serde_json::from_str(&line)
                .map_err(|e| CliError::Input(format!("{}: line 1 is not a results header: {e}", path.display())))?
        }
    };
    let mut runs = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let eval: RunEvaluation = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("{}: line {}: {e}", path.display(), i + 2)))?;
        runs.push(eval);
    }
    Ok((header, runs))
}
