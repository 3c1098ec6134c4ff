use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::marginal::MarginalModel;
use super::rejuvenate::{Rejuvenator, SweepStats};
use super::retrospective::{first_max, MapEstimate};
use super::ParticleFilterConfig;
use crate::distributions::{beta_sample, TruncatedPoisson};
use crate::error::{Error, Result};
use crate::model::{
    log_likelihood_unchecked, sample_world_state_with, CategorySet, DetectionStats, MetaEstimate, Observation,
    PriorConfig, WorldState,
};

/// A particle's belief about the world state of one assimilated observation.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldBelief {
    /// Exact conditional distribution over the enumerated support.
    Posterior(Arc<[f64]>),
    /// A single world state drawn from the prior (large category counts).
    Sample(WorldState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub v_hat: MetaEstimate,
    pub world_beliefs: Vec<WorldBelief>,
    /// Unnormalized log weight accumulated since the last resampling.
    pub log_weight: f64,
}

/// Mean of the particle rates, flagged when it had to be weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub v: MetaEstimate,
    /// Set when the particle weights were not uniform.
    pub weighted: bool,
}

fn normalize(log_weights: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = log_weights.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        let n = log_weights.count();
        return vec![1.0 / n as f64; n];
    }
    let w: Vec<f64> = log_weights.map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Entrywise mean of the particle rates. Uniformly weighted particles are
/// averaged plainly; otherwise the normalized weights are used.
pub fn estimate_v(particles: &[Particle]) -> Result<PointEstimate> {
    let first = particles.first().ok_or(Error::EmptyEnsemble)?;
    let uniform = particles.iter().all(|p| p.log_weight == first.log_weight);
    let weights = if uniform {
        vec![1.0 / particles.len() as f64; particles.len()]
    } else {
        normalize(particles.iter().map(|p| p.log_weight))
    };
    let c = first.v_hat.categories();
    let mut v = MetaEstimate::uniform(c, 0.0);
    for (p, &w) in particles.iter().zip(&weights) {
        for i in 0..2 * c {
            v.set_entry(i, v.entry(i) + w * p.v_hat.entry(i));
        }
    }
    Ok(PointEstimate { v, weighted: !uniform })
}

/// Indices selected by systematic resampling with offset `u0 ∈ [0, 1)`.
pub(crate) fn systematic_indices(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let step = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut i = 0;
    for m in 0..n {
        let u = (u0 + m as f64) * step;
        while u >= cumulative && i + 1 < n {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}

/// The particle approximation of `Pr(v, w_1..w_t | o_1..o_t)`.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    config: ParticleFilterConfig,
    model: MarginalModel,
    rejuvenator: Rejuvenator,
    counts: TruncatedPoisson,
    particles: Vec<Particle>,
    history: Vec<DetectionStats>,
    rng: ChaCha8Rng,
    resamples: usize,
    sweep_stats: SweepStats,
}

impl ParticleEnsemble {
    /// Draws every particle's rates i.i.d. from the Beta prior with uniform
    /// weights.
    pub fn new(config: &ParticleFilterConfig, prior: &PriorConfig, categories: CategorySet) -> Result<Self> {
        config.validate()?;
        prior.validate(categories)?;
        let model = MarginalModel::new(prior, categories, config.enumeration_limit)?;
        let rejuvenator = Rejuvenator::from_parts(config, prior, &model);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = categories.size();
        let particles = (0..config.num_particles)
            .map(|_| {
                let mut v_hat = MetaEstimate::uniform(c, 0.0);
                for i in 0..2 * c {
                    v_hat.set_entry(i, beta_sample(prior.beta_alpha, prior.beta_beta, &mut rng)?);
                }
                Ok(Particle { v_hat, world_beliefs: Vec::new(), log_weight: 0.0 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            counts: prior.count_distribution()?,
            model,
            rejuvenator,
            particles,
            history: Vec::new(),
            rng,
            resamples: 0,
            sweep_stats: SweepStats::default(),
        })
    }

    pub fn categories(&self) -> CategorySet {
        self.model.categories()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Mutable access, for starting from known rates.
    pub fn particles_mut(&mut self) -> &mut [Particle] {
        &mut self.particles
    }

    pub fn history(&self) -> &[DetectionStats] {
        &self.history
    }

    pub fn model(&self) -> &MarginalModel {
        &self.model
    }

    /// Whether world states are marginalized exactly.
    pub fn enumerates(&self) -> bool {
        self.model.support().is_some()
    }

    pub fn resample_count(&self) -> usize {
        self.resamples
    }

    pub fn sweep_stats(&self) -> SweepStats {
        self.sweep_stats
    }

    pub fn weights(&self) -> Vec<f64> {
        normalize(self.particles.iter().map(|p| p.log_weight))
    }

    pub fn effective_sample_size(&self) -> f64 {
        let w = self.weights();
        1.0 / w.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn assimilate(&mut self, o: &Observation) -> Result<()> {
        let stats = DetectionStats::from_observation(o, self.categories());
        self.assimilate_stats(stats)
    }

    /// Reweights by the new observation, resamples if the ESS collapsed, then
    /// rejuvenates every particle against the full history.
    pub fn assimilate_stats(&mut self, stats: DetectionStats) -> Result<()> {
        let c = self.categories();
        if stats.categories() != c.size() {
            return Err(Error::Dimension { expected: c.size(), actual: stats.categories() });
        }
        if stats.frames == 0 {
            return Err(Error::Empty("observation has no percepts".into()));
        }
        DetectionStats::new(stats.counts.clone(), stats.frames)?;

        for particle in &mut self.particles {
            let belief = if self.model.support().is_some() {
                let (log_marginal, conditional) = self.model.posterior(&stats, &particle.v_hat);
                particle.log_weight += log_marginal;
                WorldBelief::Posterior(conditional.into())
            } else {
                let w = sample_world_state_with(&self.counts, c, &mut self.rng);
                particle.log_weight += log_likelihood_unchecked(&stats, w, &particle.v_hat);
                WorldBelief::Sample(w)
            };
            particle.world_beliefs.push(belief);
        }
        self.history.push(stats);

        if self.particles.iter().all(|p| p.log_weight == f64::NEG_INFINITY) {
            // No particle explains the data; restart the weights rather than divide by zero.
            self.particles.iter_mut().for_each(|p| p.log_weight = 0.0);
        }
        let threshold = self.config.ess_resample_threshold * self.particles.len() as f64;
        if self.effective_sample_size() < threshold {
            self.resample();
        }

        if self.config.rejuvenation_sweeps > 0 {
            let t = self.history.len() - 1;
            for particle in &mut self.particles {
                let conditioned: Option<Vec<WorldState>> = particle
                    .world_beliefs
                    .iter()
                    .map(|b| match b {
                        WorldBelief::Sample(w) => Some(*w),
                        WorldBelief::Posterior(_) => None,
                    })
                    .collect();
                for _ in 0..self.config.rejuvenation_sweeps {
                    self.sweep_stats += match &conditioned {
                        Some(states) => self.rejuvenator.sweep_conditioned(
                            &mut particle.v_hat,
                            &self.history,
                            states,
                            &mut self.rng,
                        ),
                        None => self.rejuvenator.sweep(&mut particle.v_hat, &self.history, &mut self.rng),
                    };
                }
                if let WorldBelief::Posterior(_) = particle.world_beliefs[t] {
                    // Read the newest belief out under the rejuvenated rates.
                    let (_, conditional) = self.model.posterior(&self.history[t], &particle.v_hat);
                    particle.world_beliefs[t] = WorldBelief::Posterior(conditional.into());
                }
            }
        }
        Ok(())
    }

    fn resample(&mut self) {
        let weights = self.weights();
        let u0: f64 = self.rng.random();
        let picks = systematic_indices(&weights, u0);
        self.particles = picks
            .into_iter()
            .map(|i| Particle { log_weight: 0.0, ..self.particles[i].clone() })
            .collect();
        self.resamples += 1;
    }

    pub fn estimate_v(&self) -> Result<PointEstimate> {
        estimate_v(&self.particles)
    }

    /// Point estimate of the world state of observation `t` (zero-based):
    /// the argmax of the weight-averaged particle conditionals, or a weighted
    /// majority vote over sampled world states.
    pub fn online_map_world_state(&self, t: usize) -> Result<MapEstimate> {
        if t >= self.history.len() {
            return Err(Error::IndexOutOfRange { index: t, len: self.history.len() });
        }
        let weights = self.weights();
        match self.model.support() {
            Some(support) => {
                let mut mass = vec![0.0; support.len()];
                for (p, &w) in self.particles.iter().zip(&weights) {
                    if let WorldBelief::Posterior(cond) = &p.world_beliefs[t] {
                        for (m, q) in mass.iter_mut().zip(cond.iter()) {
                            *m += w * q;
                        }
                    }
                }
                let best = first_max(&mass);
                Ok(MapEstimate { state: support.states[best], posterior_mass: mass[best] })
            }
            None => {
                let mut votes: Vec<(WorldState, usize, f64)> = Vec::new();
                for (p, &w) in self.particles.iter().zip(&weights) {
                    if let WorldBelief::Sample(s) = p.world_beliefs[t] {
                        match votes.iter_mut().find(|(v, _, _)| *v == s) {
                            Some(entry) => {
                                entry.1 += 1;
                                entry.2 += w;
                            }
                            None => votes.push((s, 1, w)),
                        }
                    }
                }
                votes.sort_by(|a, b| {
                    b.1.cmp(&a.1)
                        .then(b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal))
                        .then(a.0.lex_key().cmp(&b.0.lex_key()))
                });
                let (state, _, mass) = votes[0];
                Ok(MapEstimate { state, posterior_mass: mass })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Percept;

    fn noiseless_particle(c: usize) -> Particle {
        Particle { v_hat: MetaEstimate::uniform(c, 1e-9), world_beliefs: Vec::new(), log_weight: 0.0 }
    }

    #[test]
    fn init_draws_from_prior() {
        let config = ParticleFilterConfig { seed: 5, ..ParticleFilterConfig::default() };
        let e = ParticleEnsemble::new(&config, &PriorConfig::default(), CategorySet::default()).unwrap();
        assert_eq!(e.particles().len(), 100);
        assert!(e.particles().iter().all(|p| p.log_weight == 0.0 && p.world_beliefs.is_empty()));
        let est = e.estimate_v().unwrap();
        assert!(!est.weighted);
        let mean = est.v.to_flat().iter().sum::<f64>() / 10.0;
        assert!((mean - 1.0 / 6.0).abs() < 0.02, "{mean}");
        let again = ParticleEnsemble::new(&config, &PriorConfig::default(), CategorySet::default()).unwrap();
        assert_eq!(e.particles(), again.particles());
    }

    #[test]
    fn estimate_of_identical_particles_is_exact() {
        let p = Particle {
            v_hat: MetaEstimate::new(vec![0.1, 0.3], vec![0.7, 0.123456789]).unwrap(),
            world_beliefs: Vec::new(),
            log_weight: 0.0,
        };
        let est = estimate_v(&vec![p.clone(); 7]).unwrap();
        for (a, b) in est.v.to_flat().iter().zip(p.v_hat.to_flat()) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b, "{a} vs {b}");
        }
        assert!(!est.weighted);
        assert!(matches!(estimate_v(&[]), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn weighted_estimate_is_flagged() {
        let mut a = noiseless_particle(1);
        a.v_hat = MetaEstimate::new(vec![0.2], vec![0.2]).unwrap();
        let mut b = a.clone();
        b.v_hat = MetaEstimate::new(vec![0.6], vec![0.6]).unwrap();
        b.log_weight = 3f64.ln();
        let est = estimate_v(&[a, b]).unwrap();
        assert!(est.weighted);
        assert!((est.v.fa[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn systematic_resampling_counts() {
        let idx = systematic_indices(&[0.5, 0.25, 0.25, 0.0], 0.5);
        assert_eq!(idx, vec![0, 0, 1, 2]);
        let idx = systematic_indices(&[0.0, 0.0, 1.0], 0.999);
        assert_eq!(idx, vec![2, 2, 2]);
    }

    #[test]
    fn noiseless_ensemble_identifies_world_state() {
        let config = ParticleFilterConfig { rejuvenation_sweeps: 0, ..ParticleFilterConfig::default() };
        let mut e = ParticleEnsemble::new(&config, &PriorConfig::default(), CategorySet::default()).unwrap();
        for p in &mut e.particles {
            *p = noiseless_particle(5);
        }
        let w = WorldState::from_indices([1, 4]).unwrap();
        let o = Observation::new(vec![Percept::from_bits(w.bits()); 5]).unwrap();
        e.assimilate(&o).unwrap();
        let map = e.online_map_world_state(0).unwrap();
        assert_eq!(map.state, w);
        assert!(map.posterior_mass > 1.0 - 1e-6);
        assert!(matches!(e.online_map_world_state(1), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn identity_transition_without_rejuvenation() {
        let config = ParticleFilterConfig {
            rejuvenation_sweeps: 0,
            ess_resample_threshold: 1e-9,
            ..ParticleFilterConfig::default()
        };
        let mut e = ParticleEnsemble::new(&config, &PriorConfig::default(), CategorySet::default()).unwrap();
        let before: Vec<_> = e.particles().iter().map(|p| p.v_hat.clone()).collect();
        let o = Observation::new(vec![Percept::from_bits(0b101), Percept::from_bits(0b100)]).unwrap();
        for _ in 0..5 {
            e.assimilate(&o).unwrap();
        }
        let after: Vec<_> = e.particles().iter().map(|p| p.v_hat.clone()).collect();
        assert_eq!(before, after);
        assert_eq!(e.resample_count(), 0);
    }

    #[test]
    fn sampling_regime_runs() {
        let config = ParticleFilterConfig { enumeration_limit: 2, num_particles: 20, ..ParticleFilterConfig::default() };
        let mut e = ParticleEnsemble::new(&config, &PriorConfig::default(), CategorySet::default()).unwrap();
        assert!(!e.enumerates());
        let o = Observation::new(vec![Percept::from_bits(0b11); 6]).unwrap();
        for _ in 0..10 {
            e.assimilate(&o).unwrap();
        }
        let map = e.online_map_world_state(9).unwrap();
        assert!(map.state.len() >= 1);
        assert!(e.particles().iter().all(|p| matches!(p.world_beliefs[0], WorldBelief::Sample(_))));
        assert!(e.estimate_v().unwrap().v.to_flat().iter().all(|&r| r > 0.0 && r < 1.0));
    }
}
