use super::filter::ParticleEnsemble;
use super::retrospective::MapEstimate;
use super::ParticleFilterConfig;
use crate::error::{Error, Result};
use crate::metrics::{meta_mse, MseBreakdown};
use crate::model::{CategorySet, MetaEstimate, Observation, PriorConfig, VisualSystem, WorldState};

/// State of the online filter after one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub v_mu: MetaEstimate,
    /// The rate estimate needed a weighted mean.
    pub weighted: bool,
    pub mse: Option<MseBreakdown>,
    pub map: MapEstimate,
    pub correct: Option<bool>,
}

/// Observation-by-observation record of an online filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrace {
    /// Estimate before any observation, from the prior draws.
    pub initial_v_mu: MetaEstimate,
    pub initial_mse: Option<MseBreakdown>,
    pub steps: Vec<TraceStep>,
    pub resamples: usize,
    pub acceptance_rate: f64,
}

impl PosteriorTrace {
    pub fn final_v_mu(&self) -> &MetaEstimate {
        self.steps.last().map_or(&self.initial_v_mu, |s| &s.v_mu)
    }
}

/// Runs the filter over `observations` in order, reading each step out after
/// rejuvenation. `v_true` and `truth` enable the error and accuracy columns.
pub fn run_online(
    config: &ParticleFilterConfig,
    prior: &PriorConfig,
    categories: CategorySet,
    observations: &[Observation],
    v_true: Option<&VisualSystem>,
    truth: Option<&[WorldState]>,
) -> Result<PosteriorTrace> {
    if let Some(t) = truth {
        if t.len() != observations.len() {
            return Err(Error::Dimension { expected: observations.len(), actual: t.len() });
        }
    }
    let mut ensemble = ParticleEnsemble::new(config, prior, categories)?;
    let mse = |v: &MetaEstimate| v_true.map(|truth| meta_mse(truth, v)).transpose();
    let initial = ensemble.estimate_v()?;
    let initial_mse = mse(&initial.v)?;
    let mut steps = Vec::with_capacity(observations.len());
    for (t, o) in observations.iter().enumerate() {
        if o.percepts.iter().any(|x| !x.fits(categories)) {
            return Err(Error::Parameter(format!("observation {t} mentions an unknown category")));
        }
        ensemble.assimilate(o)?;
        let est = ensemble.estimate_v()?;
        let map = ensemble.online_map_world_state(t)?;
        steps.push(TraceStep {
            mse: mse(&est.v)?,
            correct: truth.map(|w| w[t] == map.state),
            v_mu: est.v,
            weighted: est.weighted,
            map,
        });
    }
    Ok(PosteriorTrace {
        initial_v_mu: initial.v,
        initial_mse,
        steps,
        resamples: ensemble.resample_count(),
        acceptance_rate: ensemble.sweep_stats().acceptance_rate(),
    })
}
