//! Experiment configuration: defaults, a flat `key = value` file, then
//! command-line overrides, validated before any work starts.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use metacog_core::baselines::{LesionPoint, ThresholdPolicy};
use metacog_core::evaluate::{EvaluationConfig, ModelKind, WorldStateInference};
use metacog_core::inference::ParticleFilterConfig;
use metacog_core::model::{CategorySet, PriorConfig};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Jsonl => "jsonl",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown format {other:?} (expected csv or jsonl)")),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub categories: usize,
    pub prior: PriorConfig,
    pub filter: ParticleFilterConfig,
    pub world_state_inference: WorldStateInference,
    pub num_systems: u64,
    pub world_states_per_system: usize,
    pub models: Vec<ModelKind>,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub root_seed: u64,
    pub jobs: usize,
    pub threshold: ThresholdPolicy,
    pub lesion: LesionPoint,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            categories: 5,
            prior: PriorConfig::default(),
            filter: ParticleFilterConfig::default(),
            world_state_inference: WorldStateInference::default(),
            num_systems: 1000,
            world_states_per_system: 75,
            models: ModelKind::ALL.to_vec(),
            out: PathBuf::from("out"),
            format: OutputFormat::default(),
            root_seed: 0,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threshold: ThresholdPolicy::default(),
            lesion: LesionPoint::default(),
        }
    }
}

/// Every key accepted in a config file; flags use the same names with dashes.
pub const KEYS: &[&str] = &[
    "categories",
    "beta_alpha",
    "beta_beta",
    "poisson_lambda",
    "count_min",
    "count_max",
    "frames_min",
    "frames_max",
    "particles",
    "proposal_sigma",
    "rejuvenation_sweeps",
    "ess_resample_threshold",
    "enumeration_limit",
    "world_state_inference",
    "systems",
    "world_states",
    "models",
    "out",
    "format",
    "seed",
    "jobs",
    "threshold",
    "threshold_strict",
    "lesion_point",
];

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| CliError::Config(format!("{key} = {value:?}: {e}")))
}

pub fn parse_models(value: &str) -> CliResult<Vec<ModelKind>> {
    let mut models = Vec::new();
    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: ModelKind = parse("models", name)?;
        if !models.contains(&m) {
            models.push(m);
        }
    }
    models.sort();
    Ok(models)
}

impl ExperimentConfig {
    /// Sets one key. Dashes and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "categories" => self.categories = parse(&key, value)?,
            "beta_alpha" => self.prior.beta_alpha = parse(&key, value)?,
            "beta_beta" => self.prior.beta_beta = parse(&key, value)?,
            "poisson_lambda" => self.prior.poisson_lambda = parse(&key, value)?,
            "count_min" => self.prior.count_bounds.0 = parse(&key, value)?,
            "count_max" => self.prior.count_bounds.1 = parse(&key, value)?,
            "frames_min" => self.prior.frames_bounds.0 = parse(&key, value)?,
            "frames_max" => self.prior.frames_bounds.1 = parse(&key, value)?,
            "particles" => self.filter.num_particles = parse(&key, value)?,
            "proposal_sigma" => self.filter.proposal_sigma = parse(&key, value)?,
            "rejuvenation_sweeps" => self.filter.rejuvenation_sweeps = parse(&key, value)?,
            "ess_resample_threshold" => self.filter.ess_resample_threshold = parse(&key, value)?,
            "enumeration_limit" => self.filter.enumeration_limit = parse(&key, value)?,
            "world_state_inference" => self.world_state_inference = parse(&key, value)?,
            "systems" => self.num_systems = parse(&key, value)?,
            "world_states" => self.world_states_per_system = parse(&key, value)?,
            "models" => self.models = parse_models(value)?,
            "out" => self.out = PathBuf::from(value),
            "format" => self.format = parse(&key, value)?,
            "seed" => self.root_seed = parse(&key, value)?,
            "jobs" => self.jobs = parse(&key, value)?,
            "threshold" => self.threshold.theta = parse(&key, value)?,
            "threshold_strict" => self.threshold.strict = parse(&key, value)?,
            "lesion_point" => {
                self.lesion = match value {
                    "mode" => LesionPoint::Mode,
                    "mean" => LesionPoint::Mean,
                    other => return Err(CliError::Config(format!("lesion_point = {other:?}: expected mode or mean"))),
                }
            }
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// ignored; repeated keys are rejected.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Input(format!("config file {} not found", path.display())),
            _ => CliError::io(path)(e),
        })?;
        self.apply_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected key = value", i + 1)));
            };
            let key = key.trim().replace('-', "_");
            if !seen.insert(key.clone()) {
                return Err(CliError::Config(format!("line {}: duplicate key {key:?}", i + 1)));
            }
            self.set(&key, value).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn category_set(&self) -> CliResult<CategorySet> {
        CategorySet::new(self.categories).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let cats = self.category_set()?;
        let fail = |m: String| Err(CliError::Config(m));
        self.prior.validate(cats).map_err(|e| CliError::Config(e.to_string()))?;
        self.evaluation().validate().map_err(|e| CliError::Config(e.to_string()))?;
        ThresholdPolicy::new(self.threshold.theta, self.threshold.strict)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.num_systems == 0 {
            return fail("systems must be at least 1".into());
        }
        if self.world_states_per_system == 0 {
            return fail("world_states must be at least 1".into());
        }
        if self.jobs == 0 {
            return fail("jobs must be at least 1".into());
        }
        if self.models.is_empty() {
            return fail("models must name at least one model".into());
        }
        Ok(())
    }

    pub fn evaluation(&self) -> EvaluationConfig {
        EvaluationConfig {
            prior: self.prior.clone(),
            filter: self.filter.clone(),
            root_seed: self.root_seed,
            threshold: self.threshold,
            lesion: self.lesion,
            models: self.models.clone(),
            world_states: self.world_state_inference,
        }
    }

    /// The settings that determine results. Output location, format and
    /// parallelism are left out so they never change recorded bytes.
    pub fn echo(&self) -> Value {
        let models: Vec<&str> = self.models.iter().map(|m| m.name()).collect();
        json!({
            "categories": self.categories,
            "beta_alpha": self.prior.beta_alpha,
            "beta_beta": self.prior.beta_beta,
            "poisson_lambda": self.prior.poisson_lambda,
            "count_min": self.prior.count_bounds.0,
            "count_max": self.prior.count_bounds.1,
            "frames_min": self.prior.frames_bounds.0,
            "frames_max": self.prior.frames_bounds.1,
            "particles": self.filter.num_particles,
            "proposal_sigma": self.filter.proposal_sigma,
            "rejuvenation_sweeps": self.filter.rejuvenation_sweeps,
            "ess_resample_threshold": self.filter.ess_resample_threshold,
            "enumeration_limit": self.filter.enumeration_limit,
            "world_state_inference": self.world_state_inference,
            "systems": self.num_systems,
            "world_states": self.world_states_per_system,
            "models": models,
            "seed": self.root_seed,
            "threshold": self.threshold.theta,
            "threshold_strict": self.threshold.strict,
            "lesion_point": self.lesion,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let mut c = ExperimentConfig::default();
        c.apply_text("# comment\nsystems = 12\n\nparticles=50\nmodels = threshold, online\n").unwrap();
        c.set("particles", "70").unwrap();
        assert_eq!(c.num_systems, 12);
        assert_eq!(c.filter.num_particles, 70);
        assert_eq!(c.models, vec![ModelKind::Online, ModelKind::Threshold]);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        let mut c = ExperimentConfig::default();
        assert!(matches!(c.apply_text("particle = 3"), Err(CliError::Config(_))));
        assert!(matches!(c.apply_text("seed = 1\nseed = 2"), Err(CliError::Config(_))));
        assert!(matches!(c.apply_text("seed"), Err(CliError::Config(_))));
        assert!(matches!(c.set("seed", "-1"), Err(CliError::Config(_))));
    }

    #[test]
    fn reversed_count_bounds_fail_validation() {
        let mut c = ExperimentConfig::default();
        c.set("count-min", "5").unwrap();
        c.set("count-max", "1").unwrap();
        let err = c.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn every_key_is_settable_and_echo_is_stable() {
        let defaults = ExperimentConfig::default();
        for key in KEYS {
            let mut c = defaults.clone();
            let value = match *key {
                "models" => "online",
                "out" => "elsewhere",
                "format" => "jsonl",
                "world_state_inference" => "exact",
                "lesion_point" => "mean",
                "threshold_strict" => "true",
                "proposal_sigma" | "beta_alpha" | "beta_beta" | "poisson_lambda" | "threshold"
                | "ess_resample_threshold" => "0.25",
                _ => "3",
            };
            c.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
            assert_ne!(c, defaults, "{key}");
        }
        let mut c = defaults.clone();
        c.jobs = 8;
        c.out = "x".into();
        assert_eq!(c.echo(), defaults.echo());
    }
}
