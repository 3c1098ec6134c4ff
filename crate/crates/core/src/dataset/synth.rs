use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    render_observation, sample_visual_system, sample_world_state_with, CategorySet, Observation, PriorConfig,
    VisualSystem, WorldState,
};
use crate::seeds::{derive_seed, SYNTH_STREAM};

/// One synthesized visual system and everything it perceived.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub run_id: u64,
    pub seed: u64,
    pub v_true: VisualSystem,
    pub world_states: Vec<WorldState>,
    pub observations: Vec<Observation>,
}

impl Run {
    pub fn categories(&self) -> usize {
        self.v_true.categories()
    }

    pub fn percept_count(&self) -> usize {
        self.observations.iter().map(Observation::frame_count).sum()
    }

    pub fn validate(&self, categories: CategorySet) -> Result<()> {
        let fail = |message: String| Err(Error::Run { run_id: self.run_id, message });
        if self.v_true.categories() != categories.size() {
            return fail(format!(
                "visual system has {} categories, expected {}",
                self.v_true.categories(),
                categories.size()
            ));
        }
        if self.world_states.len() != self.observations.len() {
            return fail(format!(
                "{} world states but {} observations",
                self.world_states.len(),
                self.observations.len()
            ));
        }
        if self.world_states.iter().any(|w| !w.fits(categories)) {
            return fail("world state mentions an unknown category".into());
        }
        for (t, o) in self.observations.iter().enumerate() {
            if o.percepts.is_empty() {
                return fail(format!("observation {t} has no percepts"));
            }
            if o.percepts.iter().any(|x| !x.fits(categories)) {
                return fail(format!("observation {t} mentions an unknown category"));
            }
        }
        Ok(())
    }
}

/// Corpus-level settings shared by every run.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub prior: PriorConfig,
    pub categories: CategorySet,
    pub runs: Vec<Run>,
}

/// Draws a visual system, `world_state_count` world states, and for each a
/// uniform number of frames in `prior.frames_bounds`.
pub fn synthesize_run<R: Rng + ?Sized>(
    prior: &PriorConfig,
    categories: CategorySet,
    world_state_count: usize,
    rng: &mut R,
) -> Result<Run> {
    prior.validate(categories)?;
    let counts = prior.count_distribution()?;
    let v_true = sample_visual_system(prior, categories, rng)?;
    let (flo, fhi) = prior.frames_bounds;
    let mut world_states = Vec::with_capacity(world_state_count);
    let mut observations = Vec::with_capacity(world_state_count);
    for _ in 0..world_state_count {
        let w = sample_world_state_with(&counts, categories, rng);
        let frames = rng.random_range(flo..=fhi) as usize;
        observations.push(render_observation(w, &v_true, frames, rng)?);
        world_states.push(w);
    }
    Ok(Run { run_id: 0, seed: 0, v_true, world_states, observations })
}

pub fn synthesize_run_seeded(
    run_id: u64,
    seed: u64,
    prior: &PriorConfig,
    categories: CategorySet,
    world_state_count: usize,
) -> Result<Run> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = synthesize_run(prior, categories, world_state_count, &mut rng)?;
    Ok(Run { run_id, seed, ..run })
}

/// Streams `num_systems` runs into `sink`. Run `i` is seeded from
/// `(root_seed, i)` alone, so it is identical whether generated alone or
/// inside the stream.
pub fn synthesize_corpus<F>(
    num_systems: u64,
    prior: &PriorConfig,
    categories: CategorySet,
    world_state_count: usize,
    root_seed: u64,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(Run) -> Result<()>,
{
    if num_systems == 0 {
        return Err(Error::Parameter("num_systems must be at least 1".into()));
    }
    for i in 0..num_systems {
        let seed = derive_seed(root_seed, SYNTH_STREAM, i);
        let run = synthesize_run_seeded(i, seed, prior, categories, world_state_count)?;
        sink(run).map_err(|e| match e {
            Error::Run { .. } => e,
            other => Error::Run { run_id: i, message: other.to_string() },
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{render_percept, Percept};

    #[test]
    fn percept_totals_within_bounds() {
        let prior = PriorConfig::default();
        let c = CategorySet::default();
        for seed in 0..20 {
            let run = synthesize_run_seeded(seed, seed, &prior, c, 75).unwrap();
            assert!((375..=1125).contains(&run.percept_count()));
            assert!(run.observations.iter().all(|o| (5..=15).contains(&o.frame_count())));
            run.validate(c).unwrap();
        }
    }

    #[test]
    fn noiseless_system_reproduces_world_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = VisualSystem::uniform(5, 0.0);
        let w = WorldState::from_indices([0, 4]).unwrap();
        for _ in 0..50 {
            assert_eq!(render_percept(w, &v, &mut rng), Percept::from_bits(w.bits()));
        }
    }

    #[test]
    fn stream_matches_standalone() {
        let prior = PriorConfig::default();
        let c = CategorySet::default();
        let mut runs = Vec::new();
        synthesize_corpus(4, &prior, c, 10, 99, |r| {
            runs.push(r);
            Ok(())
        })
        .unwrap();
        assert_eq!(runs.len(), 4);
        let alone = synthesize_run_seeded(2, derive_seed(99, SYNTH_STREAM, 2), &prior, c, 10).unwrap();
        assert_eq!(runs[2], alone);
        assert!(synthesize_corpus(0, &prior, c, 10, 99, |_| Ok(())).is_err());
    }

    #[test]
    fn sink_failure_reports_run_index() {
        let prior = PriorConfig::default();
        let err = synthesize_corpus(5, &prior, CategorySet::default(), 3, 1, |r| {
            if r.run_id == 3 {
                Err(Error::Io(std::io::Error::other("disk full")))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Run { run_id: 3, .. }), "{err}");
    }

    #[test]
    fn corpus_mean_rate() {
        let prior = PriorConfig::default();
        let c = CategorySet::default();
        let mut sum = 0.0;
        let mut n = 0usize;
        synthesize_corpus(2000, &prior, c, 1, 5, |r| {
            sum += r.v_true.to_flat().iter().sum::<f64>();
            n += 10;
            Ok(())
        })
        .unwrap();
        assert!((sum / n as f64 - 1.0 / 6.0).abs() < 0.002);
    }
}
