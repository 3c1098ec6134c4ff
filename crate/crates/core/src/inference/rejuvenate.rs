use rand::seq::SliceRandom;
use rand::Rng;

use super::filter::{Particle, WorldBelief};
use super::marginal::MarginalModel;
use super::ParticleFilterConfig;
use crate::distributions::{beta_ln_pdf, TruncatedNormal};
use crate::error::{param, Result};
use crate::model::{xlogy, CategorySet, DetectionStats, PriorConfig, VisualSystem, WorldState};

/// Acceptance bookkeeping for one or more sweeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub proposed: usize,
    pub accepted: usize,
}

impl SweepStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

impl std::ops::AddAssign for SweepStats {
    fn add_assign(&mut self, rhs: Self) {
        self.proposed += rhs.proposed;
        self.accepted += rhs.accepted;
    }
}

/// Single-site Metropolis-Hastings over the `2C` rates of a particle.
///
/// Proposals are `TruncatedNormal(current, sigma², 0, 1)`. Because the
/// truncation normalizer depends on the current value, the acceptance ratio
/// carries the Hastings factor `Z(current) / Z(proposed)`.
#[derive(Debug, Clone)]
pub struct Rejuvenator {
    alpha: f64,
    beta: f64,
    sigma: f64,
    categories: usize,
    count_prior: Vec<f64>,
}

/// Likelihood factors of every history entry for the particle's current rates.
struct FactorCache {
    categories: usize,
    /// Raw `Pr(o_t | c present)` and `Pr(o_t | c absent)`, row-major by `t`.
    raw_present: Vec<f64>,
    raw_absent: Vec<f64>,
    /// Same pair scaled so its larger member is one.
    scaled_present: Vec<f64>,
    scaled_absent: Vec<f64>,
}

fn powers(p: f64, max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 1.0;
    for _ in 0..=max {
        out.push(acc);
        acc *= p;
    }
    out
}

impl FactorCache {
    fn new(history: &[DetectionStats], v: &VisualSystem, max_frames: usize) -> Self {
        let c = v.categories();
        let n = history.len() * c;
        let mut cache = Self {
            categories: c,
            raw_present: vec![0.0; n],
            raw_absent: vec![0.0; n],
            scaled_present: vec![0.0; n],
            scaled_absent: vec![0.0; n],
        };
        for cat in 0..c {
            cache.refresh_category(history, v, cat, max_frames);
        }
        cache
    }

    fn refresh_category(&mut self, history: &[DetectionStats], v: &VisualSystem, cat: usize, max_frames: usize) {
        let hit = powers(1.0 - v.miss[cat], max_frames);
        let miss = powers(v.miss[cat], max_frames);
        let fa = powers(v.fa[cat], max_frames);
        let rej = powers(1.0 - v.fa[cat], max_frames);
        for (t, stats) in history.iter().enumerate() {
            let k = stats.counts[cat] as usize;
            let f = stats.frames as usize;
            let a = hit[k] * miss[f - k];
            let b = fa[k] * rej[f - k];
            let i = t * self.categories + cat;
            self.raw_present[i] = a;
            self.raw_absent[i] = b;
            let m = a.max(b);
            let (sa, sb) = if m > 0.0 { (a / m, b / m) } else { (0.0, 0.0) };
            self.scaled_present[i] = sa;
            self.scaled_absent[i] = sb;
        }
    }
}

impl Rejuvenator {
    pub fn new(config: &ParticleFilterConfig, prior: &PriorConfig, categories: CategorySet) -> Result<Self> {
        config.validate()?;
        let model = MarginalModel::new(prior, categories, 0)?;
        Ok(Self::from_parts(config, prior, &model))
    }

    pub(crate) fn from_parts(config: &ParticleFilterConfig, prior: &PriorConfig, model: &MarginalModel) -> Self {
        Self {
            alpha: prior.beta_alpha,
            beta: prior.beta_beta,
            sigma: config.proposal_sigma,
            categories: model.categories().size(),
            count_prior: model.count_prior().to_vec(),
        }
    }

    fn ln_prior(&self, x: f64) -> f64 {
        beta_ln_pdf(x, self.alpha, self.beta)
    }

    /// Proposes a new value for one rate and returns `(proposal, log of the
    /// prior ratio times the Hastings correction)`.
    fn propose<R: Rng + ?Sized>(&self, current: f64, rng: &mut R) -> (f64, f64) {
        let forward = TruncatedNormal { mu: current, sigma: self.sigma, lo: 0.0, hi: 1.0 };
        let proposal = forward.sample(rng);
        let backward = TruncatedNormal { mu: proposal, ..forward };
        let lp_cur = self.ln_prior(current);
        let lp_new = self.ln_prior(proposal);
        let prior_ratio = if lp_cur == f64::NEG_INFINITY {
            if lp_new == f64::NEG_INFINITY {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            lp_new - lp_cur
        };
        let hastings = forward.normalizer().ln() - backward.normalizer().ln();
        (proposal, prior_ratio + hastings)
    }

    fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
        if log_ratio.is_nan() {
            return false;
        }
        if log_ratio >= 0.0 {
            return true;
        }
        rng.random::<f64>().ln() < log_ratio
    }

    /// One randomized sweep targeting `Pr(v | history)` with every world state
    /// marginalized out.
    pub fn sweep<R: Rng + ?Sized>(
        &self,
        v: &mut VisualSystem,
        history: &[DetectionStats],
        rng: &mut R,
    ) -> SweepStats {
        let c = self.categories;
        let max_frames = history.iter().map(|s| s.frames as usize).max().unwrap_or(0);
        let mut cache = FactorCache::new(history, v, max_frames);
        let mut order: Vec<usize> = (0..2 * c).collect();
        order.shuffle(rng);
        let mut stats = SweepStats::default();
        let mut poly = vec![0.0; c + 1];
        for entry in order {
            let (cat, is_miss) = (entry % c, entry >= c);
            let current = v.entry(entry);
            let (proposal, mut log_ratio) = self.propose(current, rng);
            stats.proposed += 1;
            if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
                continue;
            }
            let (p1, p2) = if is_miss {
                (powers(1.0 - proposal, max_frames), powers(proposal, max_frames))
            } else {
                (powers(proposal, max_frames), powers(1.0 - proposal, max_frames))
            };
            log_ratio += self.log_likelihood_ratio(&cache, history, cat, is_miss, &p1, &p2, &mut poly);
            if Self::accept(log_ratio, rng) {
                v.set_entry(entry, proposal);
                cache.refresh_category(history, v, cat, max_frames);
                stats.accepted += 1;
            }
        }
        stats
    }

    /// `Σ_t ln [L_t(proposed) / L_t(current)]` where only category `cat`'s
    /// factor changes. With the other categories held fixed each marginal is
    /// linear in that factor: `L_t = present·P_t + absent·Q_t`.
    #[allow(clippy::too_many_arguments)]
    fn log_likelihood_ratio(
        &self,
        cache: &FactorCache,
        history: &[DetectionStats],
        cat: usize,
        is_miss: bool,
        p1: &[f64],
        p2: &[f64],
        poly: &mut [f64],
    ) -> f64 {
        let c = self.categories;
        let g = &self.count_prior;
        let mut log_acc = 0.0;
        let mut prod = 1.0;
        for (t, stats) in history.iter().enumerate() {
            let row = t * c;
            poly.iter_mut().for_each(|e| *e = 0.0);
            poly[0] = 1.0;
            let mut deg = 0;
            for j in (0..c).filter(|&j| j != cat) {
                let (a, b) = (cache.scaled_present[row + j], cache.scaled_absent[row + j]);
                deg += 1;
                for n in (1..=deg).rev() {
                    poly[n] = poly[n] * b + poly[n - 1] * a;
                }
                poly[0] *= b;
            }
            let mut with_present = 0.0;
            let mut with_absent = 0.0;
            for n in 0..=deg {
                with_present += poly[n] * g[n + 1];
                with_absent += poly[n] * g[n];
            }
            let k = stats.counts[cat] as usize;
            let f = stats.frames as usize;
            let (mut a_new, mut b_new) = (cache.raw_present[row + cat], cache.raw_absent[row + cat]);
            if is_miss {
                a_new = p1[k] * p2[f - k];
            } else {
                b_new = p1[k] * p2[f - k];
            }
            let old = cache.raw_present[row + cat] * with_present + cache.raw_absent[row + cat] * with_absent;
            let new = a_new * with_present + b_new * with_absent;
            if old == 0.0 {
                if new > 0.0 {
                    return f64::INFINITY;
                }
                continue;
            }
            if new == 0.0 {
                return f64::NEG_INFINITY;
            }
            prod *= new / old;
            if !(1e-150..=1e150).contains(&prod) {
                log_acc += prod.ln();
                prod = 1.0;
            }
        }
        log_acc + prod.ln()
    }

    /// One randomized sweep targeting `Pr(v | history, w_1..w_T)` for fixed
    /// world-state samples.
    pub fn sweep_conditioned<R: Rng + ?Sized>(
        &self,
        v: &mut VisualSystem,
        history: &[DetectionStats],
        states: &[WorldState],
        rng: &mut R,
    ) -> SweepStats {
        let c = self.categories;
        // (successes, failures) per flat entry: false alarms vs correct
        // rejections, and misses vs hits.
        let mut counts = vec![(0.0f64, 0.0f64); 2 * c];
        for (stats, w) in history.iter().zip(states) {
            let f = f64::from(stats.frames);
            for cat in 0..c {
                let k = f64::from(stats.counts[cat]);
                if w.contains(cat) {
                    counts[c + cat].0 += f - k;
                    counts[c + cat].1 += k;
                } else {
                    counts[cat].0 += k;
                    counts[cat].1 += f - k;
                }
            }
        }
        let loglik = |(s, f): (f64, f64), p: f64| xlogy(s, p) + xlogy(f, 1.0 - p);
        let mut order: Vec<usize> = (0..2 * c).collect();
        order.shuffle(rng);
        let mut stats = SweepStats::default();
        for entry in order {
            let current = v.entry(entry);
            let (proposal, mut log_ratio) = self.propose(current, rng);
            stats.proposed += 1;
            let (l_new, l_cur) = (loglik(counts[entry], proposal), loglik(counts[entry], current));
            log_ratio += match (l_new == f64::NEG_INFINITY, l_cur == f64::NEG_INFINITY) {
                (true, _) => f64::NEG_INFINITY,
                (false, true) => f64::INFINITY,
                _ => l_new - l_cur,
            };
            if Self::accept(log_ratio, rng) {
                v.set_entry(entry, proposal);
                stats.accepted += 1;
            }
        }
        stats
    }
}

/// Runs the configured number of MH sweeps on one particle against the given
/// observation history.
pub fn rejuvenate<R: Rng + ?Sized>(
    particle: &mut Particle,
    history: &[DetectionStats],
    config: &ParticleFilterConfig,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<SweepStats> {
    let Some(first) = history.first() else {
        return param("rejuvenation needs a non-empty history");
    };
    let categories = CategorySet::new(first.categories())?;
    let rejuvenator = Rejuvenator::new(config, prior, categories)?;
    let samples: Option<Vec<WorldState>> = particle
        .world_beliefs
        .iter()
        .map(|b| match b {
            WorldBelief::Sample(w) => Some(*w),
            WorldBelief::Posterior(_) => None,
        })
        .collect();
    let conditioned = samples.filter(|s| s.len() == history.len() && !s.is_empty());
    let mut total = SweepStats::default();
    for _ in 0..config.rejuvenation_sweeps {
        total += match &conditioned {
            Some(states) => rejuvenator.sweep_conditioned(&mut particle.v_hat, history, states, rng),
            None => rejuvenator.sweep(&mut particle.v_hat, history, rng),
        };
    }
    Ok(total)
}
