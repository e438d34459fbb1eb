use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ZeroLikelihood;
use crate::dbn::ActionDbn;
use crate::error::{Error, Result};
use crate::exec::Executor;

/// Particles per RNG stream; fixes the work split so results do not depend
/// on the number of worker threads.
const CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    num_vars: usize,
    states: Vec<usize>,
    weights: Vec<f64>,
}

impl ParticleSet {
    /// `n` copies of `state` with uniform weights.
    pub fn replicate(state: &[usize], n: usize) -> Self {
        let mut states = Vec::with_capacity(n * state.len());
        for _ in 0..n {
            states.extend_from_slice(state);
        }
        Self {
            num_vars: state.len(),
            states,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// `n` particles drawn uniformly over the state space.
    pub fn uniform<R: Rng + ?Sized>(domains: &[usize], n: usize, rng: &mut R) -> Self {
        let mut states = Vec::with_capacity(n * domains.len());
        for _ in 0..n {
            states.extend(domains.iter().map(|&d| rng.random_range(0..d)));
        }
        Self {
            num_vars: domains.len(),
            states,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// `n` particles spread evenly over the state space in mixed-radix
    /// order; every state gets `n / |S|` particles, up to rounding.
    pub fn stratified(domains: &[usize], n: usize) -> Self {
        let total: u128 = domains.iter().map(|&d| d as u128).product();
        let mut states = vec![0; n * domains.len()];
        for (k, s) in states.chunks_mut(domains.len().max(1)).take(n).enumerate() {
            let mut idx = k as u128 * total / n as u128;
            for (slot, &d) in s.iter_mut().zip(domains).rev() {
                *slot = (idx % d as u128) as usize;
                idx /= d as u128;
            }
        }
        Self {
            num_vars: domains.len(),
            states,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, k: usize) -> &[usize] {
        &self.states[k * self.num_vars..(k + 1) * self.num_vars]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Weighted marginal of variable `i`.
    pub fn var_marginal(&self, i: usize, domain: usize) -> Vec<f64> {
        let mut out = vec![0.0; domain];
        for (k, &w) in self.weights.iter().enumerate() {
            out[self.particle(k)[i]] += w;
        }
        out
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Bootstrap SIR step: propagate through `T`, weight by `Ω`, resample
/// systematically. `seed` should differ per step; streams are derived from it
/// per fixed-size chunk of particles.
pub fn pf_step<E: Executor>(
    exec: &E,
    particles: &ParticleSet,
    dbn: &ActionDbn,
    o: &[usize],
    seed: u64,
    policy: ZeroLikelihood,
) -> Result<ParticleSet> {
    dbn.check_obs(o)?;
    let n = particles.len();
    if n == 0 {
        return Err(Error::InvalidParameter("particle set is empty".into()));
    }
    let nv = particles.num_vars;
    let chunks = n.div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| {
        let mut rng = stream(seed, c as u64 + 1);
        let range = c * CHUNK..((c + 1) * CHUNK).min(n);
        let mut states = Vec::with_capacity(range.len() * nv);
        let mut weights = Vec::with_capacity(range.len());
        for k in range {
            let next = dbn.sample_transition(particles.particle(k), &mut rng);
            weights.push(particles.weights[k] * dbn.observation_prob_unchecked(&next, o));
            states.extend(next);
        }
        (states, weights)
    });
    let mut states = Vec::with_capacity(n * nv);
    let mut weights = Vec::with_capacity(n);
    for (s, w) in parts {
        states.extend(s);
        weights.extend(w);
    }

    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return match policy {
            ZeroLikelihood::Error => Err(Error::ImpossibleObservation { cluster: None }),
            ZeroLikelihood::UniformReset => Ok(ParticleSet {
                num_vars: nv,
                states,
                weights: vec![1.0 / n as f64; n],
            }),
        };
    }

    let mut rng = stream(seed, 0);
    let step = total / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut resampled = Vec::with_capacity(n * nv);
    let mut acc = weights[0];
    let mut k = 0;
    for _ in 0..n {
        while u > acc && k + 1 < n {
            k += 1;
            acc += weights[k];
        }
        resampled.extend_from_slice(&states[k * nv..(k + 1) * nv]);
        u += step;
    }
    Ok(ParticleSet {
        num_vars: nv,
        states: resampled,
        weights: vec![1.0 / n as f64; n],
    })
}
