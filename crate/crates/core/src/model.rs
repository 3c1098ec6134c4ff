//! Domain types and the generative model of percept production.
//!
//! A world state is the set of categories present in a scene. The black-box
//! system turns it into a percept by detecting each present category `c` with
//! probability `1 - miss[c]` and hallucinating each absent category with
//! probability `fa[c]`, independently across categories. An observation is a
//! bundle of percepts of one world state, and the likelihood of an observation
//! depends on it only through per-category detection counts.

use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::distributions::{beta_sample, binomial, TruncatedPoisson};
use crate::error::{param, Error, Result};

/// Largest category count representable by the bitset types.
pub const MAX_CATEGORIES: usize = 64;

/// Number of object categories; categories are the indices `0..size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategorySet {
    size: usize,
}

impl CategorySet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size > MAX_CATEGORIES {
            return param(format!("category count must be in 1..={MAX_CATEGORIES}, got {size}"));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        0..self.size
    }

    pub(crate) fn full_mask(&self) -> u64 {
        if self.size == 64 {
            u64::MAX
        } else {
            (1u64 << self.size) - 1
        }
    }
}

impl Default for CategorySet {
    fn default() -> Self {
        Self { size: 5 }
    }
}

macro_rules! label_set {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
        pub struct $name(u64);

        impl $name {
            pub const EMPTY: Self = Self(0);

            pub fn from_bits(bits: u64) -> Self {
                Self(bits)
            }

            pub fn bits(&self) -> u64 {
                self.0
            }

            pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Result<Self> {
                let mut bits = 0u64;
                for i in indices {
                    if i >= MAX_CATEGORIES {
                        return param(format!("category index {i} out of range"));
                    }
                    bits |= 1 << i;
                }
                Ok(Self(bits))
            }

            pub fn contains(&self, category: usize) -> bool {
                category < MAX_CATEGORIES && self.0 >> category & 1 == 1
            }

            pub fn insert(&mut self, category: usize) {
                self.0 |= 1 << category;
            }

            pub fn len(&self) -> usize {
                self.0.count_ones() as usize
            }

            pub fn is_empty(&self) -> bool {
                self.0 == 0
            }

            /// Sorted category indices.
            pub fn indices(&self) -> Vec<usize> {
                (0..MAX_CATEGORIES).filter(|&i| self.contains(i)).collect()
            }

            /// True when every member is a valid index for `categories`.
            pub fn fits(&self, categories: CategorySet) -> bool {
                self.0 & !categories.full_mask() == 0
            }

            /// Ordering key: lexicographic on the presence vector
            /// `(b_0, b_1, ...)`, so the smaller key wins a tie.
            pub fn lex_key(&self) -> u64 {
                self.0.reverse_bits()
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{:?}", stringify!($name), self.indices())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                self.indices().serialize(s)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let idx = Vec::<usize>::deserialize(d)?;
                let mut seen = 0u64;
                for &i in &idx {
                    if i >= MAX_CATEGORIES {
                        return Err(serde::de::Error::custom(format!("category index {i} out of range")));
                    }
                    if seen >> i & 1 == 1 {
                        return Err(serde::de::Error::custom(format!("duplicate category index {i}")));
                    }
                    seen |= 1 << i;
                }
                Ok(Self(seen))
            }
        }
    };
}

label_set!(
    /// The set of categories actually present in a scene.
    WorldState
);
label_set!(
    /// The set of categories reported by the black-box system for one view.
    Percept
);

/// A bundle of percepts of one world state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation {
    pub percepts: Vec<Percept>,
}

impl Observation {
    pub fn new(percepts: Vec<Percept>) -> Result<Self> {
        if percepts.is_empty() {
            return Err(Error::Empty("observation has no percepts".into()));
        }
        Ok(Self { percepts })
    }

    pub fn frame_count(&self) -> usize {
        self.percepts.len()
    }

    pub fn stats(&self, categories: CategorySet) -> DetectionStats {
        DetectionStats::from_observation(self, categories)
    }
}

/// Per-category detection counts of an observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DetectionStats {
    pub counts: Vec<u32>,
    pub frames: u32,
}

impl DetectionStats {
    pub fn new(counts: Vec<u32>, frames: u32) -> Result<Self> {
        if let Some(&k) = counts.iter().find(|&&k| k > frames) {
            return param(format!("detection count {k} exceeds frame count {frames}"));
        }
        Ok(Self { counts, frames })
    }

    pub fn from_observation(o: &Observation, categories: CategorySet) -> Self {
        let counts = categories
            .indices()
            .map(|c| o.percepts.iter().filter(|x| x.contains(c)).count() as u32)
            .collect();
        Self { counts, frames: o.percepts.len() as u32 }
    }

    pub fn categories(&self) -> usize {
        self.counts.len()
    }

    /// Fraction of frames in which category `c` was detected.
    pub fn rate(&self, c: usize) -> f64 {
        f64::from(self.counts[c]) / f64::from(self.frames)
    }
}

/// Per-category false-alarm and miss rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualSystem {
    pub fa: Vec<f64>,
    pub miss: Vec<f64>,
}

/// An inferred visual system.
pub type MetaEstimate = VisualSystem;

impl VisualSystem {
    pub fn new(fa: Vec<f64>, miss: Vec<f64>) -> Result<Self> {
        if fa.len() != miss.len() {
            return Err(Error::Dimension { expected: fa.len(), actual: miss.len() });
        }
        if fa.iter().chain(&miss).any(|r| !(0.0..=1.0).contains(r)) {
            return param("rates must lie in [0, 1]");
        }
        Ok(Self { fa, miss })
    }

    pub fn uniform(categories: usize, rate: f64) -> Self {
        Self { fa: vec![rate; categories], miss: vec![rate; categories] }
    }

    pub fn categories(&self) -> usize {
        self.fa.len()
    }

    /// Flat entry `i`: false-alarm rates occupy `0..C`, miss rates `C..2C`.
    pub fn entry(&self, i: usize) -> f64 {
        let c = self.fa.len();
        if i < c {
            self.fa[i]
        } else {
            self.miss[i - c]
        }
    }

    pub fn set_entry(&mut self, i: usize, value: f64) {
        let c = self.fa.len();
        if i < c {
            self.fa[i] = value;
        } else {
            self.miss[i - c] = value;
        }
    }

    /// Probability that category `c` shows up in a percept given presence.
    pub fn detection_prob(&self, c: usize, present: bool) -> f64 {
        if present {
            1.0 - self.miss[c]
        } else {
            self.fa[c]
        }
    }

    /// Flat layout `[fa_0.., miss_0..]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.fa.iter().chain(&self.miss).copied().collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 || flat.is_empty() {
            return param(format!("flat visual system needs 2C entries, got {}", flat.len()));
        }
        let c = flat.len() / 2;
        Self::new(flat[..c].to_vec(), flat[c..].to_vec())
    }
}

/// Prior hyperparameters for visual systems, world states and frame counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub beta_alpha: f64,
    pub beta_beta: f64,
    pub poisson_lambda: f64,
    pub count_bounds: (u32, u32),
    pub frames_bounds: (u32, u32),
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            beta_alpha: 2.0,
            beta_beta: 10.0,
            poisson_lambda: 1.0,
            count_bounds: (1, 5),
            frames_bounds: (5, 15),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self, categories: CategorySet) -> Result<()> {
        if !(self.beta_alpha > 0.0 && self.beta_beta > 0.0) {
            return param("beta shape parameters must be positive");
        }
        if !(self.poisson_lambda >= 0.0) || !self.poisson_lambda.is_finite() {
            return param("poisson_lambda must be non-negative");
        }
        let (lo, hi) = self.count_bounds;
        if lo > hi {
            return param(format!("count_bounds out of order: [{lo}, {hi}]"));
        }
        if hi as usize > categories.size() {
            return param(format!(
                "count_bounds upper bound {hi} exceeds category count {}",
                categories.size()
            ));
        }
        let (flo, fhi) = self.frames_bounds;
        if flo == 0 || flo > fhi {
            return param(format!("frames_bounds must satisfy 1 <= lo <= hi, got [{flo}, {fhi}]"));
        }
        Ok(())
    }

    pub fn count_distribution(&self) -> Result<TruncatedPoisson> {
        TruncatedPoisson::new(self.poisson_lambda, self.count_bounds.0, self.count_bounds.1)
    }
}

/// Draws a world state: its size from the truncated Poisson, its members as a
/// uniform subset without replacement.
pub fn sample_world_state<R: Rng + ?Sized>(
    prior: &PriorConfig,
    categories: CategorySet,
    rng: &mut R,
) -> Result<WorldState> {
    prior.validate(categories)?;
    let counts = prior.count_distribution()?;
    Ok(sample_world_state_with(&counts, categories, rng))
}

pub(crate) fn sample_world_state_with<R: Rng + ?Sized>(
    counts: &TruncatedPoisson,
    categories: CategorySet,
    rng: &mut R,
) -> WorldState {
    let n = counts.sample(rng) as usize;
    let mut w = WorldState::EMPTY;
    for c in index::sample(rng, categories.size(), n) {
        w.insert(c);
    }
    w
}

/// Log prior of a world state: `ln d(|w|) - ln binom(C, |w|)`, or `-inf`
/// outside the truncated support.
pub fn world_state_log_prior(w: WorldState, prior: &PriorConfig, categories: CategorySet) -> Result<f64> {
    prior.validate(categories)?;
    let counts = prior.count_distribution()?;
    Ok(log_prior_with(&counts, w, categories))
}

pub(crate) fn log_prior_with(counts: &TruncatedPoisson, w: WorldState, categories: CategorySet) -> f64 {
    if !w.fits(categories) {
        return f64::NEG_INFINITY;
    }
    let n = w.len() as u32;
    let d = counts.pmf(n);
    if d == 0.0 {
        return f64::NEG_INFINITY;
    }
    d.ln() - binomial(categories.size() as u32, n).ln()
}

/// Draws `2C` independent Beta(alpha, beta) rates.
pub fn sample_visual_system<R: Rng + ?Sized>(
    prior: &PriorConfig,
    categories: CategorySet,
    rng: &mut R,
) -> Result<VisualSystem> {
    let c = categories.size();
    let draw = |rng: &mut R| -> Result<Vec<f64>> {
        (0..c).map(|_| beta_sample(prior.beta_alpha, prior.beta_beta, rng)).collect()
    };
    let fa = draw(rng)?;
    let miss = draw(rng)?;
    Ok(VisualSystem { fa, miss })
}

/// Renders one noisy percept of `w` through `v`.
pub fn render_percept<R: Rng + ?Sized>(w: WorldState, v: &VisualSystem, rng: &mut R) -> Percept {
    let mut x = Percept::EMPTY;
    for c in 0..v.categories() {
        let p = v.detection_prob(c, w.contains(c));
        if rng.random::<f64>() < p {
            x.insert(c);
        }
    }
    x
}

pub fn render_observation<R: Rng + ?Sized>(
    w: WorldState,
    v: &VisualSystem,
    frames: usize,
    rng: &mut R,
) -> Result<Observation> {
    Observation::new((0..frames).map(|_| render_percept(w, v, rng)).collect())
}

/// `k·ln p` with the convention `0·ln 0 = 0`.
#[inline]
pub(crate) fn xlogy(k: f64, p: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * p.ln()
    }
}

/// Log-probability of a single percept given `(w, v)`.
pub fn percept_log_likelihood(x: Percept, w: WorldState, v: &VisualSystem) -> f64 {
    (0..v.categories())
        .map(|c| {
            let p = v.detection_prob(c, w.contains(c));
            if x.contains(c) {
                xlogy(1.0, p)
            } else {
                xlogy(1.0, 1.0 - p)
            }
        })
        .sum()
}

/// `ln Pr(o | w, v)` computed from detection counts.
pub fn observation_log_likelihood(stats: &DetectionStats, w: WorldState, v: &VisualSystem) -> Result<f64> {
    if stats.categories() != v.categories() {
        return Err(Error::Dimension { expected: v.categories(), actual: stats.categories() });
    }
    if let Some(&k) = stats.counts.iter().find(|&&k| k > stats.frames) {
        return param(format!("detection count {k} exceeds frame count {}", stats.frames));
    }
    Ok(log_likelihood_unchecked(stats, w, v))
}

pub(crate) fn log_likelihood_unchecked(stats: &DetectionStats, w: WorldState, v: &VisualSystem) -> f64 {
    let f = f64::from(stats.frames);
    stats
        .counts
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let k = f64::from(k);
            let p = v.detection_prob(c, w.contains(c));
            xlogy(k, p) + xlogy(f - k, 1.0 - p)
        })
        .sum()
}

/// The valid world states under a prior, with their log prior masses.
#[derive(Debug, Clone)]
pub struct WorldStateSupport {
    pub states: Vec<WorldState>,
    pub log_prior: Vec<f64>,
}

impl WorldStateSupport {
    /// Enumerates every subset whose size lies in the count bounds, in
    /// increasing lexicographic order of the presence vector.
    pub fn enumerate(prior: &PriorConfig, categories: CategorySet) -> Result<Self> {
        prior.validate(categories)?;
        if categories.size() > 24 {
            return param(format!("refusing to enumerate 2^{} world states", categories.size()));
        }
        let counts = prior.count_distribution()?;
        let mut pairs: Vec<(WorldState, f64)> = (0..=categories.full_mask())
            .map(WorldState::from_bits)
            .map(|w| (w, log_prior_with(&counts, w, categories)))
            .filter(|(_, lp)| lp.is_finite())
            .collect();
        pairs.sort_by_key(|(w, _)| w.lex_key());
        let (states, log_prior) = pairs.into_iter().unzip();
        Ok(Self { states, log_prior })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c5() -> CategorySet {
        CategorySet::new(5).unwrap()
    }

    #[test]
    fn world_state_count_distribution() {
        let prior = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400_000;
        let mut ones = 0usize;
        let mut marginal = [0usize; 5];
        for _ in 0..n {
            let w = sample_world_state(&prior, c5(), &mut rng).unwrap();
            assert!((1..=5).contains(&w.len()));
            assert!(w.fits(c5()));
            if w.len() == 1 {
                ones += 1;
            }
            for (c, m) in marginal.iter_mut().enumerate() {
                if w.contains(c) {
                    *m += 1;
                }
            }
        }
        let d1 = prior.count_distribution().unwrap().pmf(1);
        assert!((ones as f64 / n as f64 - d1).abs() < 0.003);
        let mean = marginal.iter().sum::<usize>() as f64 / 5.0;
        for m in marginal {
            assert!((m as f64 - mean).abs() / (n as f64) < 0.004);
        }
    }

    #[test]
    fn forced_full_world_state() {
        let prior = PriorConfig { count_bounds: (5, 5), ..PriorConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            assert_eq!(sample_world_state(&prior, c5(), &mut rng).unwrap().len(), 5);
        }
    }

    #[test]
    fn count_bound_exceeding_categories_is_rejected() {
        let prior = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c3 = CategorySet::new(3).unwrap();
        assert!(matches!(sample_world_state(&prior, c3, &mut rng), Err(Error::Parameter(_))));
    }

    #[test]
    fn world_state_prior_normalizes() {
        let prior = PriorConfig::default();
        let support = WorldStateSupport::enumerate(&prior, c5()).unwrap();
        assert_eq!(support.len(), 31);
        let total: f64 = support.log_prior.iter().map(|l| l.exp()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        let single = WorldState::from_indices([2]).unwrap();
        let p = world_state_log_prior(single, &prior, c5()).unwrap().exp();
        let d1 = prior.count_distribution().unwrap().pmf(1);
        assert_relative_eq!(p, d1 / 5.0, max_relative = 1e-12);
        assert!((p - 0.1165).abs() < 1e-4);
        assert_eq!(world_state_log_prior(WorldState::EMPTY, &prior, c5()).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn support_is_in_lex_order() {
        let support = WorldStateSupport::enumerate(&PriorConfig::default(), c5()).unwrap();
        for pair in support.states.windows(2) {
            assert!(pair[0].lex_key() < pair[1].lex_key());
        }
        // (0,0,0,0,1) is the lexicographically smallest non-empty vector.
        assert_eq!(support.states[0], WorldState::from_indices([4]).unwrap());
    }

    #[test]
    fn visual_system_entries_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let prior = PriorConfig::default();
        let n = 20_000;
        let mut sum = 0.0;
        let mut any_above = 0usize;
        for _ in 0..n {
            let v = sample_visual_system(&prior, c5(), &mut rng).unwrap();
            assert!(v.to_flat().iter().all(|r| (0.0..=1.0).contains(r)));
            sum += v.to_flat().iter().sum::<f64>();
            if v.to_flat().iter().any(|&r| r > 0.5) {
                any_above += 1;
            }
        }
        let mean = sum / (10 * n) as f64;
        assert!((mean - 1.0 / 6.0).abs() < 0.003, "{mean}");
        // 1 - (1 - 12/2048)^10 ≈ 0.057.
        let frac = any_above as f64 / n as f64;
        assert!((frac - 0.06).abs() < 0.01, "{frac}");
    }

    #[test]
    fn noiseless_and_blind_rendering() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let w = WorldState::from_indices([0, 3]).unwrap();
        let clean = VisualSystem::uniform(5, 0.0);
        let blind = VisualSystem::new(vec![0.0; 5], vec![1.0; 5]).unwrap();
        for _ in 0..100 {
            assert_eq!(render_percept(w, &clean, &mut rng).bits(), w.bits());
            assert!(render_percept(w, &blind, &mut rng).is_empty());
        }
    }

    #[test]
    fn rendered_percept_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let v = VisualSystem::new(vec![0.0, 0.1], vec![0.2, 0.0]).unwrap();
        let w = WorldState::from_indices([0]).unwrap();
        let n = 1_000_000;
        let hits = (0..n).filter(|_| render_percept(w, &v, &mut rng).bits() == 0b01).count();
        let expected = (1.0 - 0.2) * (1.0 - 0.1);
        assert!((hits as f64 / n as f64 - expected).abs() < 0.002);
    }

    #[test]
    fn likelihood_factor_example() {
        let v = VisualSystem::new(vec![0.0], vec![0.2]).unwrap();
        let w = WorldState::from_indices([0]).unwrap();
        let stats = DetectionStats::new(vec![2], 3).unwrap();
        let ll = observation_log_likelihood(&stats, w, &v).unwrap();
        assert_relative_eq!(ll.exp(), 0.8 * 0.8 * 0.2, max_relative = 1e-12);
    }

    #[test]
    fn noiseless_likelihood_is_certain() {
        let v = VisualSystem::uniform(5, 0.0);
        let w = WorldState::from_indices([1, 2]).unwrap();
        let o = Observation::new(vec![Percept::from_bits(w.bits()); 4]).unwrap();
        assert_eq!(observation_log_likelihood(&o.stats(c5()), w, &v).unwrap(), 0.0);
        let wrong = WorldState::from_indices([1]).unwrap();
        assert_eq!(observation_log_likelihood(&o.stats(c5()), wrong, &v).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn likelihood_rejects_bad_stats() {
        assert!(DetectionStats::new(vec![4], 3).is_err());
        let v = VisualSystem::uniform(2, 0.1);
        let stats = DetectionStats::new(vec![1, 0, 0], 3).unwrap();
        assert!(matches!(
            observation_log_likelihood(&stats, WorldState::EMPTY, &v),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn percept_distribution_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for c in 1..=4usize {
            let cats = CategorySet::new(c).unwrap();
            for _ in 0..20 {
                let v = sample_visual_system(&PriorConfig::default(), cats, &mut rng).unwrap();
                let w = WorldState::from_bits(rng.random::<u64>() & cats.full_mask());
                let total: f64 = (0..=cats.full_mask())
                    .map(|b| percept_log_likelihood(Percept::from_bits(b), w, &v).exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn serde_as_sorted_indices() {
        let w = WorldState::from_indices([3, 0]).unwrap();
        assert_eq!(serde_json::to_string(&w).unwrap(), "[0,3]");
        let back: WorldState = serde_json::from_str("[3,0]").unwrap();
        assert_eq!(back, w);
        assert!(serde_json::from_str::<WorldState>("[1,1]").is_err());
    }

    fn instance() -> impl Strategy<Value = (usize, Vec<f64>, u64, Vec<u64>, Vec<usize>)> {
        (1usize..=4, 1usize..=5).prop_flat_map(|(c, f)| {
            let mask = (1u64 << c) - 1;
            (
                Just(c),
                prop::collection::vec(0.0f64..=1.0, 2 * c),
                (0..=mask),
                prop::collection::vec(0..=mask, f),
                Just((0..c).rev().collect::<Vec<_>>()),
            )
        })
    }

    fn permute_bits(bits: u64, perm: &[usize]) -> u64 {
        perm.iter().enumerate().fold(0, |acc, (i, &p)| acc | ((bits >> i & 1) << p))
    }

    proptest! {
        #[test]
        fn sufficient_statistics_match_per_percept_product((c, flat, w, xs, perm) in instance()) {
            let v = VisualSystem::from_flat(&flat).unwrap();
            let cats = CategorySet::new(c).unwrap();
            let w = WorldState::from_bits(w);
            let o = Observation::new(xs.iter().map(|&b| Percept::from_bits(b)).collect()).unwrap();
            let brute: f64 = o.percepts.iter().map(|&x| percept_log_likelihood(x, w, &v)).sum();
            let fast = observation_log_likelihood(&o.stats(cats), w, &v).unwrap();
            if brute.is_finite() {
                prop_assert!((brute - fast).abs() <= 1e-12 * brute.abs().max(1.0));
                prop_assert!((brute.exp() - fast.exp()).abs() <= 1e-12 * brute.exp());
            } else {
                prop_assert_eq!(fast, f64::NEG_INFINITY);
            }

            // Relabelling categories consistently leaves the likelihood unchanged.
            let mut fa = vec![0.0; c];
            let mut miss = vec![0.0; c];
            for (i, &p) in perm.iter().enumerate() {
                fa[p] = v.fa[i];
                miss[p] = v.miss[i];
            }
            let pv = VisualSystem::new(fa, miss).unwrap();
            let pw = WorldState::from_bits(permute_bits(w.bits(), &perm));
            let po = Observation::new(xs.iter().map(|&b| Percept::from_bits(permute_bits(b, &perm))).collect()).unwrap();
            let permuted = observation_log_likelihood(&po.stats(cats), pw, &pv).unwrap();
            if fast.is_finite() {
                prop_assert!((permuted - fast).abs() <= 1e-12 * fast.abs().max(1.0));
            } else {
                prop_assert_eq!(permuted, f64::NEG_INFINITY);
            }
        }

        #[test]
        fn sampling_is_seed_deterministic(seed in any::<u64>()) {
            let prior = PriorConfig::default();
            let run = |seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v = sample_visual_system(&prior, c5(), &mut rng).unwrap();
                let w = sample_world_state(&prior, c5(), &mut rng).unwrap();
                let x = render_percept(w, &v, &mut rng);
                (v, w, x)
            };
            prop_assert_eq!(run(seed), run(seed));
        }
    }
}
