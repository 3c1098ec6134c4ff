use crate::error::Result;
use crate::model::{xlogy, CategorySet, DetectionStats, PriorConfig, VisualSystem, WorldStateSupport};
use crate::distributions::binomial;

/// Exact world-state marginalization for one observation.
///
/// The world-state prior depends only on the number of present categories,
/// `Pr(w) = g(|w|)` with `g(n) = d(n) / binom(C, n)`, so the marginal
/// likelihood is a weighted sum of elementary symmetric polynomials of the
/// per-category factors and never needs the full enumeration. Enumeration is
/// kept for the conditional distribution over world states.
#[derive(Debug, Clone)]
pub struct MarginalModel {
    categories: CategorySet,
    /// `g(n)` for `n = 0..=C`.
    count_prior: Vec<f64>,
    support: Option<WorldStateSupport>,
}

/// Per-category likelihood factors of one observation, scaled so the larger
/// of the pair is one. `ln_scale` holds the sum of the removed log scales.
#[derive(Debug, Clone)]
pub(crate) struct ScaledFactors {
    pub present: Vec<f64>,
    pub absent: Vec<f64>,
    pub ln_scale: f64,
}

impl MarginalModel {
    /// Builds the model; the support is enumerated when `C <= enumeration_limit`.
    pub fn new(prior: &PriorConfig, categories: CategorySet, enumeration_limit: usize) -> Result<Self> {
        prior.validate(categories)?;
        let counts = prior.count_distribution()?;
        let c = categories.size() as u32;
        let count_prior = (0..=c).map(|n| counts.pmf(n) / binomial(c, n)).collect();
        let support = if categories.size() <= enumeration_limit {
            Some(WorldStateSupport::enumerate(prior, categories)?)
        } else {
            None
        };
        Ok(Self { categories, count_prior, support })
    }

    pub fn categories(&self) -> CategorySet {
        self.categories
    }

    pub fn support(&self) -> Option<&WorldStateSupport> {
        self.support.as_ref()
    }

    pub(crate) fn count_prior(&self) -> &[f64] {
        &self.count_prior
    }

    /// Log of `Pr(o | c present, v)` and `Pr(o | c absent, v)` per category.
    pub(crate) fn ln_factors(stats: &DetectionStats, v: &VisualSystem) -> (Vec<f64>, Vec<f64>) {
        let f = f64::from(stats.frames);
        stats
            .counts
            .iter()
            .enumerate()
            .map(|(c, &k)| {
                let k = f64::from(k);
                let hit = 1.0 - v.miss[c];
                let fa = v.fa[c];
                (xlogy(k, hit) + xlogy(f - k, v.miss[c]), xlogy(k, fa) + xlogy(f - k, 1.0 - fa))
            })
            .unzip()
    }

    pub(crate) fn scaled_factors(stats: &DetectionStats, v: &VisualSystem) -> ScaledFactors {
        let (lp, la) = Self::ln_factors(stats, v);
        let mut ln_scale = 0.0;
        let mut present = Vec::with_capacity(lp.len());
        let mut absent = Vec::with_capacity(lp.len());
        for (p, a) in lp.into_iter().zip(la) {
            let m = p.max(a);
            if m == f64::NEG_INFINITY {
                present.push(0.0);
                absent.push(0.0);
                ln_scale = f64::NEG_INFINITY;
            } else {
                present.push((p - m).exp());
                absent.push((a - m).exp());
                ln_scale += m;
            }
        }
        ScaledFactors { present, absent, ln_scale }
    }

    /// `ln Σ_w Pr(o | w, v) Pr(w)`.
    pub fn log_marginal(&self, stats: &DetectionStats, v: &VisualSystem) -> f64 {
        let s = Self::scaled_factors(stats, v);
        if s.ln_scale == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        // Coefficients of Π_c (absent_c + present_c · z).
        let mut poly = vec![0.0; s.present.len() + 1];
        poly[0] = 1.0;
        for (deg, (&p, &a)) in s.present.iter().zip(&s.absent).enumerate() {
            for n in (0..=deg + 1).rev() {
                let carry = if n > 0 { poly[n - 1] * p } else { 0.0 };
                poly[n] = poly[n] * a + carry;
            }
        }
        let total: f64 = poly.iter().zip(&self.count_prior).map(|(e, g)| e * g).sum();
        s.ln_scale + total.ln()
    }

    /// Log marginal likelihood and the conditional distribution over the
    /// enumerated support. Panics if the support was not enumerated.
    pub fn posterior(&self, stats: &DetectionStats, v: &VisualSystem) -> (f64, Vec<f64>) {
        let support = self.support.as_ref().expect("world-state support not enumerated");
        let s = Self::scaled_factors(stats, v);
        let joint: Vec<f64> = support
            .states
            .iter()
            .map(|w| {
                let g = self.count_prior[w.len()];
                (0..s.present.len()).fold(g, |acc, c| {
                    acc * if w.contains(c) { s.present[c] } else { s.absent[c] }
                })
            })
            .collect();
        let total: f64 = joint.iter().sum();
        if !(total > 0.0) || s.ln_scale == f64::NEG_INFINITY {
            let uniform = 1.0 / support.len() as f64;
            return (f64::NEG_INFINITY, vec![uniform; support.len()]);
        }
        (s.ln_scale + total.ln(), joint.into_iter().map(|j| j / total).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_likelihood_unchecked, sample_visual_system, WorldState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dp_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for c in 1..=6usize {
            let cats = CategorySet::new(c).unwrap();
            let prior = PriorConfig { count_bounds: (1, c.min(5) as u32), ..PriorConfig::default() };
            let model = MarginalModel::new(&prior, cats, 15).unwrap();
            for _ in 0..50 {
                let v = sample_visual_system(&prior, cats, &mut rng).unwrap();
                let frames = rng.random_range(1..=15u32);
                let counts = (0..c).map(|_| rng.random_range(0..=frames)).collect();
                let stats = DetectionStats::new(counts, frames).unwrap();
                let support = model.support().unwrap();
                let brute: f64 = support
                    .states
                    .iter()
                    .zip(&support.log_prior)
                    .map(|(&w, lp)| (lp + log_likelihood_unchecked(&stats, w, &v)).exp())
                    .sum::<f64>()
                    .ln();
                let dp = model.log_marginal(&stats, &v);
                let (en, cond) = model.posterior(&stats, &v);
                assert!((dp - brute).abs() < 1e-10 * brute.abs().max(1.0), "{dp} vs {brute}");
                assert!((en - brute).abs() < 1e-10 * brute.abs().max(1.0));
                assert!((cond.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_posterior_concentrates() {
        let cats = CategorySet::new(5).unwrap();
        let model = MarginalModel::new(&PriorConfig::default(), cats, 15).unwrap();
        let v = VisualSystem::uniform(5, 1e-9);
        let stats = DetectionStats::new(vec![6, 0, 6, 0, 0], 6).unwrap();
        let (_, cond) = model.posterior(&stats, &v);
        let truth = WorldState::from_indices([0, 2]).unwrap();
        let idx = model.support().unwrap().states.iter().position(|&w| w == truth).unwrap();
        assert!(cond[idx] > 1.0 - 1e-6);
    }

    #[test]
    fn impossible_observation_has_zero_marginal() {
        let cats = CategorySet::new(2).unwrap();
        let prior = PriorConfig { count_bounds: (1, 2), ..PriorConfig::default() };
        let model = MarginalModel::new(&prior, cats, 15).unwrap();
        let v = VisualSystem::uniform(2, 0.0);
        // Category 0 seen in one of two frames cannot happen with a perfect system.
        let stats = DetectionStats::new(vec![1, 0], 2).unwrap();
        assert_eq!(model.log_marginal(&stats, &v), f64::NEG_INFINITY);
        assert_eq!(model.posterior(&stats, &v).0, f64::NEG_INFINITY);
    }
}
