//! Comparison models that map an observation to a world state without
//! learning anything about the black-box system.

use serde::{Deserialize, Serialize};

use crate::distributions::{beta_mean, beta_mode};
use crate::error::{param, Error, Result};
use crate::inference::{retrospective_infer_with, MapEstimate, MapMethod};
use crate::metrics::world_state_accuracy;
use crate::model::{CategorySet, DetectionStats, MetaEstimate, Observation, PriorConfig, WorldState};

/// Declare a category present when it shows up in at least `theta` of the
/// frames (strictly more than `theta` when `strict`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub theta: f64,
    pub strict: bool,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self { theta: 0.5, strict: false }
    }
}

impl ThresholdPolicy {
    pub fn new(theta: f64, strict: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return param(format!("threshold must lie in [0, 1], got {theta}"));
        }
        Ok(Self { theta, strict })
    }

    pub fn apply(&self, stats: &DetectionStats) -> WorldState {
        let mut w = WorldState::EMPTY;
        for c in 0..stats.categories() {
            // k/F and theta are both correctly rounded, so equal rationals compare equal.
            let rate = stats.rate(c);
            let keep = if self.strict { rate > self.theta } else { rate >= self.theta };
            if keep {
                w.insert(c);
            }
        }
        w
    }
}

pub fn threshold_infer(o: &Observation, policy: &ThresholdPolicy, categories: CategorySet) -> WorldState {
    policy.apply(&o.stats(categories))
}

/// `0.00, 0.01, ..., 1.00`.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| f64::from(i) / 100.0).collect()
}

/// Grid search for the threshold with the best mean world-state accuracy on
/// labelled data. Ties go to the smallest threshold.
pub fn fit_threshold(labelled: &[(DetectionStats, WorldState)], grid: &[f64]) -> Result<(f64, f64)> {
    if labelled.is_empty() {
        return Err(Error::Empty("no labelled observations to fit a threshold".into()));
    }
    if grid.is_empty() {
        return Err(Error::Empty("empty threshold grid".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for &theta in grid {
        let policy = ThresholdPolicy::new(theta, false)?;
        let hits: u64 = labelled
            .iter()
            .map(|(stats, w)| u64::from(world_state_accuracy(*w, policy.apply(stats))))
            .sum();
        let acc = hits as f64 / labelled.len() as f64;
        let better = match best {
            None => true,
            Some((t, a)) => acc > a || (acc == a && theta < t),
        };
        if better {
            best = Some((theta, acc));
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Which point of the Beta prior a lesioned model fixes its rates at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionPoint {
    #[default]
    Mode,
    Mean,
}

pub fn lesioned_rates(prior: &PriorConfig, categories: CategorySet, point: LesionPoint) -> MetaEstimate {
    let r = match point {
        LesionPoint::Mode => beta_mode(prior.beta_alpha, prior.beta_beta),
        LesionPoint::Mean => beta_mean(prior.beta_alpha, prior.beta_beta),
    };
    MetaEstimate::uniform(categories.size(), r)
}

/// Per-observation MAP with the rates fixed at a prior point estimate.
pub fn lesioned_infer(
    observations: &[Observation],
    prior: &PriorConfig,
    categories: CategorySet,
    point: LesionPoint,
) -> Result<Vec<MapEstimate>> {
    lesioned_infer_with(observations, prior, categories, point, MapMethod::Exact)
}

pub fn lesioned_infer_with(
    observations: &[Observation],
    prior: &PriorConfig,
    categories: CategorySet,
    point: LesionPoint,
    method: MapMethod,
) -> Result<Vec<MapEstimate>> {
    retrospective_infer_with(&lesioned_rates(prior, categories, point), observations, prior, method)
}
