//! Sequential Monte Carlo inference over the visual system and world states.
//!
//! Each particle carries a hypothesis `v_hat` about the black-box system. The
//! world state of each observation is marginalized exactly by enumeration
//! when the category count is small, so a particle's incremental weight is the
//! marginal likelihood `Σ_w Pr(o | w, v_hat) Pr(w)`. After reweighting (and
//! resampling when the effective sample size collapses) every particle gets a
//! Metropolis-Hastings sweep over its rates, targeting the posterior given the
//! full history.

mod filter;
mod marginal;
mod online;
mod rejuvenate;
mod retrospective;

pub use filter::{estimate_v, Particle, ParticleEnsemble, PointEstimate, WorldBelief};
pub use marginal::MarginalModel;
pub use online::{run_online, PosteriorTrace, TraceStep};
pub use rejuvenate::{rejuvenate, Rejuvenator, SweepStats};
pub use retrospective::{
    map_world_state, retrospective_infer, retrospective_infer_with, sampled_map_world_state, MapEstimate, MapMethod,
};

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleFilterConfig {
    pub num_particles: usize,
    /// Standard deviation of the truncated-normal rejuvenation proposal.
    pub proposal_sigma: f64,
    /// Full MH sweeps over all `2C` rates after each observation. Zero
    /// disables rejuvenation.
    pub rejuvenation_sweeps: usize,
    /// Resample when ESS falls below this fraction of the particle count.
    pub ess_resample_threshold: f64,
    /// Largest category count handled by exact world-state enumeration.
    pub enumeration_limit: usize,
    pub seed: u64,
}

impl Default for ParticleFilterConfig {
    fn default() -> Self {
        Self {
            num_particles: 100,
            proposal_sigma: 0.1,
            rejuvenation_sweeps: 1,
            ess_resample_threshold: 0.5,
            enumeration_limit: 15,
            seed: 0,
        }
    }
}

impl ParticleFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_particles < 2 {
            return param(format!("num_particles must be at least 2, got {}", self.num_particles));
        }
        if !(self.proposal_sigma > 0.0) || !self.proposal_sigma.is_finite() {
            return param(format!("proposal_sigma must be positive, got {}", self.proposal_sigma));
        }
        if !(self.ess_resample_threshold > 0.0 && self.ess_resample_threshold <= 1.0) {
            return param(format!(
                "ess_resample_threshold must lie in (0, 1], got {}",
                self.ess_resample_threshold
            ));
        }
        Ok(())
    }
}
