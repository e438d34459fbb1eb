use alloc::vec;
use alloc::vec::Vec;

use crate::belief::JointBelief;
use crate::dbn::{strides_for, ActionDbn};
use crate::error::{Error, Result};

/// Enumerates the positive entries of `T(s, ·)` for one `s`.
struct Successors<'a> {
    dbn: &'a ActionDbn,
    strides: Vec<usize>,
    next: Vec<usize>,
}

impl<'a> Successors<'a> {
    fn new(dbn: &'a ActionDbn) -> Self {
        let domains: Vec<usize> = dbn.state_vars().iter().map(|v| v.domain).collect();
        Self {
            dbn,
            strides: strides_for(&domains),
            next: vec![0; domains.len()],
        }
    }

    fn visit(&mut self, s: &[usize], mut emit: impl FnMut(usize, f64)) {
        self.descend(s, 0, 1.0, 0, &mut emit);
    }

    fn descend(&mut self, s: &[usize], depth: usize, mass: f64, index: usize, emit: &mut impl FnMut(usize, f64)) {
        let order = self.dbn.next_order();
        if depth == order.len() {
            emit(index, mass);
            return;
        }
        let i = order[depth];
        let cpt = self.dbn.state_cpt(i);
        let r = cpt.row_index(s, &self.next, &[]);
        for v in 0..cpt.child_domain() {
            let p = cpt.row(r)[v];
            if p == 0.0 {
                continue;
            }
            self.next[i] = v;
            self.descend(s, depth + 1, mass * p, index + v * self.strides[i], emit);
        }
    }
}

fn condition(dbn: &ActionDbn, mut predicted: Vec<f64>, domains: Vec<usize>, o: &[usize]) -> Result<JointBelief> {
    let mut state = vec![0usize; domains.len()];
    let joint_domains = domains.clone();
    for (idx, p) in predicted.iter_mut().enumerate() {
        if *p == 0.0 {
            continue;
        }
        crate::dbn::decode_mixed_radix(idx, &joint_domains, &mut state);
        *p *= dbn.observation_prob_unchecked(&state, o);
    }
    let total: f64 = predicted.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ImpossibleObservation { cluster: None });
    }
    predicted.iter_mut().for_each(|p| *p /= total);
    JointBelief::from_probs(domains, predicted)
}

/// `b'(s') ∝ Ω(s', o) Σ_s T(s, s') b(s)`.
pub fn exact_step(belief: &JointBelief, dbn: &ActionDbn, o: &[usize]) -> Result<JointBelief> {
    dbn.check_obs(o)?;
    check_domains(belief, dbn)?;
    let mut succ = Successors::new(dbn);
    let mut predicted = vec![0.0; belief.len()];
    let mut s = vec![0usize; dbn.num_state()];
    for (idx, &b) in belief.probs().iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        belief.decode(idx, &mut s);
        succ.visit(&s, |t, p| predicted[t] += b * p);
    }
    condition(dbn, predicted, belief.domains().to_vec(), o)
}

fn check_domains(belief: &JointBelief, dbn: &ActionDbn) -> Result<()> {
    let ok = belief.domains().len() == dbn.num_state()
        && belief.domains().iter().zip(dbn.state_vars()).all(|(&d, v)| d == v.domain);
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: dbn.num_state(),
            found: belief.domains().len(),
        })
    }
}

/// Precomputed sparse transition matrix of one action (row = `s`).
#[derive(Clone, Debug)]
pub struct SparseTransition {
    domains: Vec<usize>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
}

impl SparseTransition {
    pub fn build(dbn: &ActionDbn, cap: usize) -> Result<Self> {
        let domains: Vec<usize> = dbn.state_vars().iter().map(|v| v.domain).collect();
        let size: u128 = domains.iter().map(|&d| d as u128).product();
        if size > cap as u128 || size > u32::MAX as u128 {
            return Err(Error::StateSpaceTooLarge { size, cap });
        }
        let size = size as usize;
        let mut succ = Successors::new(dbn);
        let mut offsets = Vec::with_capacity(size + 1);
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        let mut s = vec![0usize; domains.len()];
        offsets.push(0);
        for idx in 0..size {
            crate::dbn::decode_mixed_radix(idx, &domains, &mut s);
            succ.visit(&s, |t, p| {
                targets.push(t as u32);
                probs.push(p);
            });
            offsets.push(targets.len());
        }
        Ok(Self {
            domains,
            offsets,
            targets,
            probs,
        })
    }

    pub fn nonzeros(&self) -> usize {
        self.targets.len()
    }

    /// Same result as [`exact_step`], using the cached matrix.
    pub fn step(&self, belief: &JointBelief, dbn: &ActionDbn, o: &[usize]) -> Result<JointBelief> {
        dbn.check_obs(o)?;
        if belief.domains() != self.domains.as_slice() {
            return Err(Error::DimensionMismatch {
                expected: self.domains.len(),
                found: belief.domains().len(),
            });
        }
        let mut predicted = vec![0.0; belief.len()];
        for (idx, &b) in belief.probs().iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let range = self.offsets[idx]..self.offsets[idx + 1];
            for (&t, &p) in self.targets[range.clone()].iter().zip(&self.probs[range]) {
                predicted[t as usize] += b * p;
            }
        }
        condition(dbn, predicted, self.domains.clone(), o)
    }
}
