use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::marginal::MarginalModel;
use crate::distributions::TruncatedPoisson;
use crate::error::{param, Error, Result};
use crate::model::{
    log_likelihood_unchecked, sample_world_state_with, CategorySet, DetectionStats, MetaEstimate, Observation,
    PriorConfig, WorldState,
};

/// How a world state is read out when the rates are held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum MapMethod {
    /// Exact argmax over every admissible world state.
    Exact,
    /// Importance sampling: `particles` world states drawn from the prior,
    /// weighted by their likelihood; the sampled state carrying the most
    /// weight wins.
    PriorSampling { particles: usize, seed: u64 },
}

/// A MAP world state and its posterior probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEstimate {
    pub state: WorldState,
    pub posterior_mass: f64,
}

/// Relative gap below which two probabilities count as tied.
pub(crate) const TIE_TOLERANCE: f64 = 1e-12;

/// Index of the first entry within [`TIE_TOLERANCE`] of the maximum. Over a
/// lexicographically sorted support this applies the tie rule even when
/// summation order perturbs the last bits of equal scores.
pub(crate) fn first_max(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|&v| v >= max - TIE_TOLERANCE * max.abs()).unwrap_or(0)
}

/// Exact `argmax_w Pr(o | w, v) Pr(w)`, ties broken toward the
/// lexicographically smallest presence vector.
pub fn map_world_state(model: &MarginalModel, stats: &DetectionStats, v: &MetaEstimate) -> MapEstimate {
    if let Some(support) = model.support() {
        let (_, cond) = model.posterior(stats, v);
        let best = first_max(&cond);
        return MapEstimate { state: support.states[best], posterior_mass: cond[best] };
    }
    map_by_count(model, stats, v)
}

/// MAP without enumeration. The prior depends only on `|w|`, so for each
/// admissible size the best state takes the categories with the largest
/// present-vs-absent log-likelihood gain.
fn map_by_count(model: &MarginalModel, stats: &DetectionStats, v: &MetaEstimate) -> MapEstimate {
    let (ln_present, ln_absent) = MarginalModel::ln_factors(stats, v);
    let base: f64 = ln_absent.iter().sum();
    let c = ln_present.len();
    let mut gains: Vec<(usize, f64)> = (0..c).map(|i| (i, ln_present[i] - ln_absent[i])).collect();
    // Equal gains prefer higher indices: absent-at-lower-index is
    // lexicographically smaller.
    gains.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(b.0.cmp(&a.0)));
    let g = model.count_prior();
    let mut best: Option<(f64, WorldState)> = None;
    let mut acc = base;
    let mut state = WorldState::EMPTY;
    for n in 0..=c {
        if n > 0 {
            let (i, gain) = gains[n - 1];
            acc += gain;
            state.insert(i);
        }
        if g[n] == 0.0 || acc.is_nan() {
            continue;
        }
        let score = acc + g[n].ln();
        let better = match best {
            None => true,
            Some((s, w)) => {
                let tie = (score - s).abs() <= TIE_TOLERANCE * s.abs();
                if tie { state.lex_key() < w.lex_key() } else { score > s }
            }
        };
        if better {
            best = Some((score, state));
        }
    }
    let (score, state) = best.unwrap_or((f64::NEG_INFINITY, WorldState::EMPTY));
    let log_marginal = model.log_marginal(stats, v);
    let mass = if log_marginal.is_finite() { (score - log_marginal).exp() } else { 0.0 };
    MapEstimate { state, posterior_mass: mass }
}

/// Particle approximation of the MAP world state: draws `particles` states
/// from the prior and returns the distinct sample with the largest total
/// normalized likelihood weight. Ties go to the lexicographically smaller
/// presence vector.
pub fn sampled_map_world_state<R: rand::Rng + ?Sized>(
    counts: &TruncatedPoisson,
    categories: CategorySet,
    stats: &DetectionStats,
    v: &MetaEstimate,
    particles: usize,
    rng: &mut R,
) -> MapEstimate {
    let mut samples: Vec<(WorldState, f64)> = (0..particles)
        .map(|_| {
            let w = sample_world_state_with(counts, categories, rng);
            (w, log_likelihood_unchecked(stats, w, v))
        })
        .collect();
    let max = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let weight = |l: f64| if max == f64::NEG_INFINITY { 1.0 } else { (l - max).exp() };
    let total: f64 = samples.iter().map(|s| weight(s.1)).sum();
    samples.sort_by_key(|s| s.0.lex_key());
    let mut best: Option<(WorldState, f64)> = None;
    let mut i = 0;
    while i < samples.len() {
        let state = samples[i].0;
        let mut mass = 0.0;
        while i < samples.len() && samples[i].0 == state {
            mass += weight(samples[i].1);
            i += 1;
        }
        if best.is_none_or(|(_, m)| mass > m) {
            best = Some((state, mass));
        }
    }
    let (state, mass) = best.unwrap_or((WorldState::EMPTY, 0.0));
    MapEstimate { state, posterior_mass: mass / total }
}

/// Re-infers every world state with the rates fixed at `v_mu`. With `v`
/// fixed the world states are conditionally independent, so the joint MAP is
/// the per-observation MAP.
pub fn retrospective_infer(
    v_mu: &MetaEstimate,
    observations: &[Observation],
    prior: &PriorConfig,
) -> Result<Vec<MapEstimate>> {
    let categories = CategorySet::new(v_mu.categories())?;
    let model = MarginalModel::new(prior, categories, 15)?;
    observations
        .iter()
        .map(|o| {
            if o.percepts.iter().any(|x| !x.fits(categories)) {
                return Err(Error::Parameter("percept mentions an unknown category".into()));
            }
            Ok(map_world_state(&model, &o.stats(categories), v_mu))
        })
        .collect()
}

/// [`retrospective_infer`] with a selectable readout.
pub fn retrospective_infer_with(
    v_mu: &MetaEstimate,
    observations: &[Observation],
    prior: &PriorConfig,
    method: MapMethod,
) -> Result<Vec<MapEstimate>> {
    let MapMethod::PriorSampling { particles, seed } = method else {
        return retrospective_infer(v_mu, observations, prior);
    };
    if particles == 0 {
        return param("prior-sampling readout needs at least one particle");
    }
    let categories = CategorySet::new(v_mu.categories())?;
    prior.validate(categories)?;
    let counts = prior.count_distribution()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    observations
        .iter()
        .map(|o| {
            if o.percepts.iter().any(|x| !x.fits(categories)) {
                return Err(Error::Parameter("percept mentions an unknown category".into()));
            }
            Ok(sampled_map_world_state(&counts, categories, &o.stats(categories), v_mu, particles, &mut rng))
        })
        .collect()
}
