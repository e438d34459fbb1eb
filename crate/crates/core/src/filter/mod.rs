//! Belief filters: selective factored (PSBF), non-selective factored
//! (Boyen–Koller), bootstrap particle filter, and the exact joint filter.

mod exact;
mod factored;
mod kl;
mod particle;

use core::time::Duration;

use crate::clustering::MarginalWeights;

pub use exact::{exact_step, SparseTransition};
pub use factored::{bk_step, factor_observe, factor_transition, psbf_step, StepContext};
pub use kl::{kl_bits, kl_factored, kl_particles, relative_entropy, KL_FLOOR};
pub use particle::{pf_step, ParticleSet};

/// What to do when an observation has zero likelihood under the belief.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZeroLikelihood {
    #[default]
    Error,
    /// Replace the affected factor (or particle weights) with uniform.
    UniformReset,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FilterConfig {
    pub on_zero_likelihood: ZeroLikelihood,
    pub marginal_weights: MarginalWeights,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub factors_total: usize,
    pub factors_skipped: usize,
    pub transition_time: Duration,
    pub observation_time: Duration,
    /// Passivity bookkeeping and A1 marginalization.
    pub overhead_time: Duration,
    /// Factors reset to uniform under [`ZeroLikelihood::UniformReset`].
    pub resets: usize,
}

impl StepStats {
    pub fn total_time(&self) -> Duration {
        self.transition_time + self.observation_time + self.overhead_time
    }

    pub fn skipped_fraction(&self) -> f64 {
        if self.factors_total == 0 {
            0.0
        } else {
            self.factors_skipped as f64 / self.factors_total as f64
        }
    }
}
