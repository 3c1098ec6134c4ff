//! Evaluation quantities: rate-estimate error, world-state accuracy,
//! observation noise and the accuracy-versus-noise curves.

use serde::{Deserialize, Serialize};

use crate::distributions::{binomial, TruncatedPoisson};
use crate::error::{Error, Result};
use crate::model::{CategorySet, MetaEstimate, Observation, VisualSystem, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseBreakdown {
    /// Mean over all `2C` entries.
    pub combined: f64,
    pub fa: f64,
    pub miss: f64,
}

pub fn meta_mse(v_true: &VisualSystem, v_hat: &MetaEstimate) -> Result<MseBreakdown> {
    if v_true.categories() != v_hat.categories() {
        return Err(Error::Dimension { expected: v_true.categories(), actual: v_hat.categories() });
    }
    let c = v_true.categories() as f64;
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let fa_sum = sq(&v_true.fa, &v_hat.fa);
    let miss_sum = sq(&v_true.miss, &v_hat.miss);
    let fa = fa_sum / c;
    let miss = miss_sum / c;
    Ok(MseBreakdown { combined: (fa + miss) / 2.0, fa, miss })
}

/// 1 when the inferred set is exactly the true set, else 0.
pub fn world_state_accuracy(w_true: WorldState, w_hat: WorldState) -> u8 {
    u8::from(w_true == w_hat)
}

/// Mean per-frame, per-category disagreement between an observation and the
/// world state that produced it.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseScore(pub f64);

pub fn observation_noise(w_true: WorldState, o: &Observation, categories: CategorySet) -> NoiseScore {
    let stats = o.stats(categories);
    let f = stats.frames;
    let disagreements: u32 = stats
        .counts
        .iter()
        .enumerate()
        .map(|(c, &k)| if w_true.contains(c) { f - k } else { k })
        .sum();
    NoiseScore(f64::from(disagreements) / (f64::from(f) * categories.size() as f64))
}

/// One observation's noise with a correctness bit per model.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySample {
    pub zeta: f64,
    pub correct: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingPoint {
    pub zeta: f64,
    /// Mean accuracy per model, in the input model order.
    pub accuracy: Vec<f64>,
    pub count: usize,
}

/// `0.00, 0.01, ..., 1.00`.
pub fn default_noise_grid() -> Vec<f64> {
    (0..=100).map(|i| f64::from(i) / 100.0).collect()
}

// Window edges are sums of decimals; widen by a hair so closed intervals
// include rational noise values sitting exactly on an edge.
const EDGE_SLACK: f64 = 1e-9;

/// Mean accuracy of each model over observations whose noise falls in the
/// closed window `[zeta - halfwidth, zeta + halfwidth]`, for each grid point.
/// Empty windows produce no point.
pub fn rolling_accuracy_by_noise(samples: &[NoisySample], halfwidth: f64, grid: &[f64]) -> Result<Vec<RollingPoint>> {
    let Some(first) = samples.first() else {
        return Err(Error::Empty("no evaluations for the noise curve".into()));
    };
    let models = first.correct.len();
    if let Some(bad) = samples.iter().find(|s| s.correct.len() != models) {
        return Err(Error::Dimension { expected: models, actual: bad.correct.len() });
    }
    let mut sorted: Vec<&NoisySample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.zeta.total_cmp(&b.zeta));
    let zetas: Vec<f64> = sorted.iter().map(|s| s.zeta).collect();
    let mut out = Vec::new();
    for &z in grid {
        let lo = zetas.partition_point(|&x| x < z - halfwidth - EDGE_SLACK);
        let hi = zetas.partition_point(|&x| x <= z + halfwidth + EDGE_SLACK);
        if hi <= lo {
            continue;
        }
        let window = &sorted[lo..hi];
        let accuracy = (0..models)
            .map(|m| window.iter().filter(|s| s.correct[m]).count() as f64 / window.len() as f64)
            .collect();
        out.push(RollingPoint { zeta: z, accuracy, count: window.len() });
    }
    Ok(out)
}

/// Probability that a world state drawn from the prior equals an independent
/// draw: `Σ_n d(n)² / binom(C, n)`.
pub fn chance_accuracy(categories: usize, lambda: f64, bounds: (u32, u32)) -> Result<f64> {
    let counts = TruncatedPoisson::new(lambda, bounds.0, bounds.1)?;
    let c = categories as u32;
    Ok((bounds.0..=bounds.1.min(c)).map(|n| counts.pmf(n).powi(2) / binomial(c, n)).sum())
}
