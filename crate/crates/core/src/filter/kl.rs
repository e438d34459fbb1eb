use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::ParticleSet;
use crate::belief::{FactoredBelief, JointBelief};

/// Approximate probabilities are floored at this value before the log.
pub const KL_FLOOR: f64 = 1e-12;

/// `KL(p ‖ q)` in bits over aligned vectors.
pub fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * libm::log2(pi / qi.max(KL_FLOOR)))
        .sum::<f64>()
        .max(0.0)
}

/// `KL(exact ‖ approx)` in bits, with `approx` evaluated per joint state.
pub fn relative_entropy(exact: &JointBelief, mut approx: impl FnMut(&[usize]) -> f64) -> f64 {
    let mut state = alloc::vec![0usize; exact.domains().len()];
    let mut total = 0.0;
    for (idx, &p) in exact.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        exact.decode(idx, &mut state);
        total += p * libm::log2(p / approx(&state).max(KL_FLOOR));
    }
    total.max(0.0)
}

pub fn kl_factored(exact: &JointBelief, approx: &FactoredBelief) -> f64 {
    relative_entropy(exact, |s| approx.prob(s))
}

/// Particles are turned into a histogram over joint states.
pub fn kl_particles(exact: &JointBelief, approx: &ParticleSet) -> f64 {
    let mut hist: BTreeMap<usize, f64> = BTreeMap::new();
    for (k, &w) in approx.weights().iter().enumerate() {
        *hist.entry(exact.index_of(approx.particle(k))).or_insert(0.0) += w;
    }
    let q: Vec<f64> = (0..exact.len()).map(|i| hist.get(&i).copied().unwrap_or(0.0)).collect();
    kl_bits(exact.probs(), &q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        assert_eq!(kl_bits(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }

    #[test]
    fn half_vs_quarter() {
        // 0.5 log2(0.5/0.25) + 0.5 log2(0.5/0.75)
        let expected = 0.5 * 1.0 + 0.5 * libm::log2(2.0 / 3.0);
        let got = kl_bits(&[0.5, 0.5], &[0.25, 0.75]);
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.2075).abs() < 1e-4);
    }

    #[test]
    fn floor_caps_divergence() {
        let got = kl_bits(&[1.0, 0.0], &[0.0, 1.0]);
        assert!((got - libm::log2(1.0 / KL_FLOOR)).abs() < 1e-9);
    }
}
