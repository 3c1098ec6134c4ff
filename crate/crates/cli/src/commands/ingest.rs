use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use metacog_core::dataset::ingest_percepts;
use metacog_core::inference::{retrospective_infer_with, run_online};
use metacog_core::model::{CategorySet, Observation, WorldState};
use metacog_core::seeds::RETRO_STREAM;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const INFERENCES_FILE: &str = "inferences.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    pub fa: Vec<f64>,
    pub miss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationInference {
    pub id: String,
    pub frames: usize,
    pub online: Vec<String>,
    pub retrospective: Vec<String>,
    pub posterior_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inferences {
    pub kind: &'static str,
    pub run_id: u64,
    pub vocabulary: Vec<String>,
    pub v_mu: RateEstimate,
    pub observations: Vec<ObservationInference>,
    /// Online and retrospective states as index sets, for exact comparison.
    #[serde(skip)]
    pub states: Vec<(WorldState, WorldState)>,
}

/// One label per line; blank lines and `#` comments are skipped.
pub fn read_vocabulary(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Input(format!("vocabulary {} not found", path.display())),
        _ => CliError::io(path)(e),
    })?;
    let labels: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    let mut seen = BTreeSet::new();
    if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
        return Err(CliError::Input(format!("vocabulary repeats label {dup:?}")));
    }
    if labels.is_empty() {
        return Err(CliError::Input(format!("vocabulary {} is empty", path.display())));
    }
    Ok(labels)
}

fn names(w: WorldState, vocabulary: &[String]) -> Vec<String> {
    w.indices().into_iter().map(|i| vocabulary[i].clone()).collect()
}

/// Runs online then retrospective inference on an external percept log and
/// writes `<out>/inferences.json`. Seeds are derived exactly as `run` derives
/// them for `run_id`.
pub fn cmd_ingest(config: &ExperimentConfig, percepts: &Path, vocabulary: &Path, run_id: u64) -> CliResult<(PathBuf, Inferences)> {
    let vocabulary = read_vocabulary(vocabulary)?;
    let mut config = config.clone();
    config.categories = vocabulary.len();
    config.validate()?;
    let categories = CategorySet::new(vocabulary.len()).map_err(|e| CliError::Config(e.to_string()))?;
    if !percepts.exists() {
        return Err(CliError::Input(format!("percept file {} not found", percepts.display())));
    }
    let ingested = ingest_percepts(percepts, &vocabulary).map_err(CliError::reading(percepts))?;
    if ingested.is_empty() {
        return Err(CliError::Input(format!("{} holds no observations", percepts.display())));
    }
    let observations: Vec<Observation> = ingested.iter().map(|o| o.observation.clone()).collect();
    let evaluation = config.evaluation();
    let trace = run_online(&evaluation.filter_for(run_id), &config.prior, categories, &observations, None, None)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let v_mu = trace.final_v_mu().clone();
    let method = evaluation.map_method(RETRO_STREAM, run_id);
    let maps = retrospective_infer_with(&v_mu, &observations, &config.prior, method)
        .map_err(|e| CliError::Input(e.to_string()))?;

    let states: Vec<(WorldState, WorldState)> =
        trace.steps.iter().zip(&maps).map(|(s, m)| (s.map.state, m.state)).collect();
    let result = Inferences {
        kind: "inferences",
        run_id,
        v_mu: RateEstimate { fa: v_mu.fa.clone(), miss: v_mu.miss.clone() },
        observations: ingested
            .iter()
            .zip(&states)
            .zip(&maps)
            .map(|((o, &(online, retro)), m)| ObservationInference {
                id: o.id.clone(),
                frames: o.observation.frame_count(),
                online: names(online, &vocabulary),
                retrospective: names(retro, &vocabulary),
                posterior_mass: m.posterior_mass,
            })
            .collect(),
        vocabulary,
        states,
    };
    fs::create_dir_all(&config.out).map_err(CliError::io(&config.out))?;
    let path = config.out.join(INFERENCES_FILE);
    let mut text = serde_json::to_string_pretty(&result).expect("inferences serialize");
    text.push('\n');
    fs::write(&path, text).map_err(CliError::io(&path))?;
    info!("wrote inferences for {} observations to {}", result.observations.len(), path.display());
    Ok((path, result))
}
