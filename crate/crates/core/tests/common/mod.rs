#![allow(dead_code)]

use std::collections::BTreeSet;

use psbf_core::dbn::{ActionDbn, DbnBuilder, Node, VarSpec};
use psbf_core::synth::{make_passive, make_static};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_row(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    if rng.random_bool(0.3) {
        let hot = rng.random_range(0..d);
        return (0..d).map(|v| f64::from(u8::from(v == hot))).collect();
    }
    let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random valid DBN; intra-slice edges only go from lower to higher index.
/// Some variables are rewired to be passive or static.
pub fn random_dbn(seed: u64, n: usize, m: usize, max_domain: usize) -> ActionDbn {
    let mut rng = rng(seed);
    let state: Vec<VarSpec> = (0..n)
        .map(|i| VarSpec::new(format!("x{}", i + 1), rng.random_range(1..=max_domain).max(if i == 0 { 2 } else { 1 })))
        .collect();
    let obs: Vec<VarSpec> = (0..m).map(|j| VarSpec::new(format!("y{}", j + 1), 2)).collect();
    let mut b = DbnBuilder::new("a", state.clone(), obs.clone());
    for i in 0..n {
        let mut parents = Vec::new();
        if rng.random_bool(0.8) {
            parents.push(Node::Now(i));
        }
        for j in (0..n).filter(|&j| j != i) {
            if rng.random_bool(0.25) {
                parents.push(Node::Now(j));
            }
        }
        for j in 0..i {
            if rng.random_bool(0.3) {
                parents.push(Node::Next(j));
            }
        }
        let d = state[i].domain;
        let mut row = Vec::new();
        b = b
            .cpt_fn(Node::Next(i), parents, |_, v| {
                if v == 0 {
                    row = random_row(&mut rng, d);
                }
                row[v]
            })
            .unwrap();
    }
    for j in 0..m {
        let mut parents = vec![Node::Next(rng.random_range(0..n))];
        if n > 1 && rng.random_bool(0.5) {
            let other = Node::Next(rng.random_range(0..n));
            if !parents.contains(&other) {
                parents.push(other);
            }
        }
        if j > 0 && rng.random_bool(0.3) {
            parents.push(Node::Obs(j - 1));
        }
        let mut row = Vec::new();
        b = b
            .cpt_fn(Node::Obs(j), parents, |_, v| {
                if v == 0 {
                    row = random_row(&mut rng, 2);
                }
                row[v]
            })
            .unwrap();
    }
    let mut dbn = b.build().unwrap();
    for i in 0..n {
        let roll: f64 = rng.random();
        if roll < 0.15 {
            dbn = make_static(&dbn, i).unwrap();
        } else if roll < 0.55 && i > 0 {
            let phi: BTreeSet<usize> = (0..rng.random_range(1..=2.min(i)))
                .map(|_| rng.random_range(0..i))
                .collect();
            if let Ok(d) = make_passive(&dbn, i, &phi, 1.0, &mut rng) {
                dbn = d;
            }
        }
    }
    dbn
}

/// All assignments over `domains` in mixed-radix order (first digit most
/// significant).
pub fn assignments(domains: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = domains.iter().product();
    (0..total)
        .map(|mut idx| {
            let mut out = vec![0; domains.len()];
            for (k, &d) in domains.iter().enumerate().rev() {
                out[k] = idx % d;
                idx /= d;
            }
            out
        })
        .collect()
}

pub fn state_domains(dbn: &ActionDbn) -> Vec<usize> {
    dbn.state_vars().iter().map(|v| v.domain).collect()
}

pub fn obs_domains(dbn: &ActionDbn) -> Vec<usize> {
    dbn.obs_vars().iter().map(|v| v.domain).collect()
}

/// One-step pushforward `Σ_s T(s, s') b(s)` by enumeration.
pub fn pushforward(dbn: &ActionDbn, prior: &[f64]) -> Vec<f64> {
    let states = assignments(&state_domains(dbn));
    let mut out = vec![0.0; states.len()];
    for (a, s) in states.iter().enumerate() {
        if prior[a] == 0.0 {
            continue;
        }
        for (b, t) in states.iter().enumerate() {
            out[b] += prior[a] * dbn.transition_prob(s, t).unwrap();
        }
    }
    out
}

/// Marginal of `vars` (mixed-radix in the given order) from a joint vector.
pub fn marginal(domains: &[usize], joint: &[f64], vars: &[usize]) -> Vec<f64> {
    let sub: Vec<usize> = vars.iter().map(|&v| domains[v]).collect();
    let mut out = vec![0.0; sub.iter().product()];
    for (idx, s) in assignments(domains).iter().enumerate() {
        let mut k = 0;
        for (&v, &d) in vars.iter().zip(&sub) {
            k = k * d + s[v];
        }
        out[k] += joint[idx];
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
