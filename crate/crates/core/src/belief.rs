//! Belief representations: factored (one distribution per cluster) and the
//! dense joint used by the exact filter.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::clustering::Clustering;
use crate::dbn::{decode_mixed_radix, strides_for, PROB_TOL};
use crate::error::{Error, Result};

/// Default cap on the number of joint states a [`JointBelief`] may hold.
pub const JOINT_CAP: usize = 1 << 20;

/// Shared indexing information for the factors of a [`FactoredBelief`].
#[derive(Clone, Debug, PartialEq)]
pub struct FactorLayout {
    clustering: Clustering,
    domains: Vec<usize>,
    cluster_domains: Vec<Vec<usize>>,
    cluster_strides: Vec<Vec<usize>>,
}

impl FactorLayout {
    pub fn new(clustering: Clustering, domains: Vec<usize>) -> Result<Arc<Self>> {
        if clustering.num_vars() != domains.len() {
            return Err(Error::DimensionMismatch {
                expected: domains.len(),
                found: clustering.num_vars(),
            });
        }
        let cluster_domains: Vec<Vec<usize>> = clustering
            .clusters()
            .iter()
            .map(|c| c.iter().map(|&i| domains[i]).collect())
            .collect();
        let cluster_strides = cluster_domains.iter().map(|d| strides_for(d)).collect();
        Ok(Arc::new(Self {
            clustering,
            domains,
            cluster_domains,
            cluster_strides,
        }))
    }

    pub fn clustering(&self) -> &Clustering {
        &self.clustering
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn num_clusters(&self) -> usize {
        self.clustering.len()
    }

    /// Number of joint values `|S(C_k)|` of cluster `k`.
    pub fn factor_len(&self, k: usize) -> usize {
        self.cluster_domains[k].iter().product()
    }

    pub fn cluster_domains(&self, k: usize) -> &[usize] {
        &self.cluster_domains[k]
    }

    pub fn cluster_strides(&self, k: usize) -> &[usize] {
        &self.cluster_strides[k]
    }

    /// Index into factor `k` of the cluster values read from a full state.
    #[inline]
    pub fn index_in(&self, k: usize, state: &[usize]) -> usize {
        self.clustering.clusters()[k]
            .iter()
            .zip(&self.cluster_strides[k])
            .map(|(&i, s)| state[i] * s)
            .sum()
    }

    /// Writes the cluster values of entry `index` of factor `k` into `state`.
    #[inline]
    pub fn scatter(&self, k: usize, index: usize, state: &mut [usize]) {
        let vars = &self.clustering.clusters()[k];
        let mut rest = index;
        for p in (0..vars.len()).rev() {
            let d = self.cluster_domains[k][p];
            state[vars[p]] = rest % d;
            rest /= d;
        }
    }

    pub fn joint_size(&self) -> u128 {
        self.domains.iter().map(|&d| d as u128).product()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactoredBelief {
    layout: Arc<FactorLayout>,
    factors: Vec<Vec<f64>>,
}

impl FactoredBelief {
    pub fn uniform(layout: Arc<FactorLayout>) -> Self {
        let factors = (0..layout.num_clusters())
            .map(|k| {
                let len = layout.factor_len(k);
                vec![1.0 / len as f64; len]
            })
            .collect();
        Self { layout, factors }
    }

    pub fn point_mass(layout: Arc<FactorLayout>, state: &[usize]) -> Result<Self> {
        if state.len() != layout.domains.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.domains.len(),
                found: state.len(),
            });
        }
        let factors = (0..layout.num_clusters())
            .map(|k| {
                let mut f = vec![0.0; layout.factor_len(k)];
                f[layout.index_in(k, state)] = 1.0;
                f
            })
            .collect();
        Ok(Self { layout, factors })
    }

    /// Wraps explicit factors; each must have the right length and sum to 1.
    pub fn from_factors(layout: Arc<FactorLayout>, factors: Vec<Vec<f64>>) -> Result<Self> {
        if factors.len() != layout.num_clusters() {
            return Err(Error::DimensionMismatch {
                expected: layout.num_clusters(),
                found: factors.len(),
            });
        }
        for (k, f) in factors.iter().enumerate() {
            if f.len() != layout.factor_len(k) {
                return Err(Error::DimensionMismatch {
                    expected: layout.factor_len(k),
                    found: f.len(),
                });
            }
            let sum: f64 = f.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL || f.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidParameter(alloc::format!(
                    "factor {k} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(Self { layout, factors })
    }

    pub(crate) fn from_parts_unchecked(layout: Arc<FactorLayout>, factors: Vec<Vec<f64>>) -> Self {
        Self { layout, factors }
    }

    /// Projects a joint distribution onto the clusters.
    pub fn project(layout: Arc<FactorLayout>, joint: &JointBelief) -> Self {
        let factors = (0..layout.num_clusters())
            .map(|k| joint.marginal(&layout.clustering.clusters()[k]))
            .collect();
        Self { layout, factors }
    }

    pub fn layout(&self) -> &Arc<FactorLayout> {
        &self.layout
    }

    pub fn clustering(&self) -> &Clustering {
        &self.layout.clustering
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn factor(&self, k: usize) -> &[f64] {
        &self.factors[k]
    }

    pub fn into_factors(self) -> Vec<Vec<f64>> {
        self.factors
    }

    /// Marginal of factor `k` over `vars` (all members of cluster `k`),
    /// mixed-radix indexed in the order of `vars`.
    pub fn cluster_marginal(&self, k: usize, vars: &[usize]) -> Vec<f64> {
        let cluster = &self.layout.clustering.clusters()[k];
        let positions: Vec<usize> = vars
            .iter()
            .map(|v| cluster.iter().position(|c| c == v).expect("variable not in cluster"))
            .collect();
        let out_domains: Vec<usize> = vars.iter().map(|&v| self.layout.domains[v]).collect();
        let out_strides = strides_for(&out_domains);
        let mut out = vec![0.0; out_domains.iter().product()];
        let cd = &self.layout.cluster_domains[k];
        let mut values = vec![0usize; cluster.len()];
        for (idx, &p) in self.factors[k].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            decode_mixed_radix(idx, cd, &mut values);
            let o: usize = positions.iter().zip(&out_strides).map(|(&pos, s)| values[pos] * s).sum();
            out[o] += p;
        }
        out
    }

    /// Marginal of a single variable, averaged over every cluster containing it.
    pub fn var_marginal(&self, i: usize) -> Vec<f64> {
        let owners = self.layout.clustering.owners(i);
        let mut out = vec![0.0; self.layout.domains[i]];
        for &k in owners {
            for (o, p) in out.iter_mut().zip(self.cluster_marginal(k, &[i])) {
                *o += p;
            }
        }
        let n = owners.len() as f64;
        out.iter_mut().for_each(|p| *p /= n);
        out
    }

    /// Dense joint weights over `vars` (mixed-radix in the given order) under
    /// the product-of-factors belief. Variables sharing a cluster keep their
    /// joint marginal; a variable owned by several clusters is treated as an
    /// independent group with its averaged marginal.
    pub fn joint_weights(&self, vars: &[usize]) -> Vec<f64> {
        let domains: Vec<usize> = vars.iter().map(|&v| self.layout.domains[v]).collect();
        let size: usize = domains.iter().product();
        if vars.is_empty() {
            return vec![1.0];
        }
        let clustering = &self.layout.clustering;
        // groups: (positions in `vars`, table over those positions)
        let mut groups: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        let mut by_cluster: Vec<(usize, Vec<usize>)> = Vec::new();
        for (pos, &v) in vars.iter().enumerate() {
            let owners = clustering.owners(v);
            if owners.len() == 1 {
                match by_cluster.iter_mut().find(|(k, _)| *k == owners[0]) {
                    Some((_, ps)) => ps.push(pos),
                    None => by_cluster.push((owners[0], vec![pos])),
                }
            } else {
                groups.push((vec![pos], self.var_marginal(v)));
            }
        }
        for (k, positions) in by_cluster {
            let members: Vec<usize> = positions.iter().map(|&p| vars[p]).collect();
            groups.push((positions, self.cluster_marginal(k, &members)));
        }
        let group_strides: Vec<Vec<usize>> = groups
            .iter()
            .map(|(ps, _)| strides_for(&ps.iter().map(|&p| domains[p]).collect::<Vec<_>>()))
            .collect();

        let mut out = vec![0.0; size];
        let mut values = vec![0usize; vars.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            decode_mixed_radix(idx, &domains, &mut values);
            let mut w = 1.0;
            for ((ps, table), strides) in groups.iter().zip(&group_strides) {
                let g: usize = ps.iter().zip(strides).map(|(&p, s)| values[p] * s).sum();
                w *= table[g];
                if w == 0.0 {
                    break;
                }
            }
            *slot = w;
        }
        out
    }

    /// Value of the implied joint `Π_k b_k(s_k)` at a full state.
    pub fn prob(&self, state: &[usize]) -> f64 {
        (0..self.factors.len())
            .map(|k| self.factors[k][self.layout.index_in(k, state)])
            .product()
    }

    /// Most likely value of each variable under its marginal.
    pub fn argmax_state(&self) -> Vec<usize> {
        (0..self.layout.domains.len())
            .map(|i| argmax(&self.var_marginal(i)))
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.factors
            .iter()
            .zip(&other.factors)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// Dense distribution over the full state space.
#[derive(Clone, Debug, PartialEq)]
pub struct JointBelief {
    domains: Vec<usize>,
    strides: Vec<usize>,
    probs: Vec<f64>,
}

impl JointBelief {
    fn check_size(domains: &[usize], cap: usize) -> Result<usize> {
        let size: u128 = domains.iter().map(|&d| d as u128).product();
        if size > cap as u128 {
            return Err(Error::StateSpaceTooLarge { size, cap });
        }
        Ok(size as usize)
    }

    pub fn uniform(domains: Vec<usize>, cap: usize) -> Result<Self> {
        let size = Self::check_size(&domains, cap)?;
        Ok(Self {
            strides: strides_for(&domains),
            domains,
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn point_mass(domains: Vec<usize>, state: &[usize], cap: usize) -> Result<Self> {
        let size = Self::check_size(&domains, cap)?;
        let strides = strides_for(&domains);
        let mut probs = vec![0.0; size];
        probs[state.iter().zip(&strides).map(|(v, s)| v * s).sum::<usize>()] = 1.0;
        Ok(Self { domains, strides, probs })
    }

    pub fn from_probs(domains: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let size: usize = domains.iter().product();
        if probs.len() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                found: probs.len(),
            });
        }
        Ok(Self {
            strides: strides_for(&domains),
            domains,
            probs,
        })
    }

    /// The product-form joint implied by a factored belief.
    pub fn from_factored(belief: &FactoredBelief, cap: usize) -> Result<Self> {
        let domains = belief.layout.domains.clone();
        let size = Self::check_size(&domains, cap)?;
        let mut state = vec![0usize; domains.len()];
        let probs = (0..size)
            .map(|idx| {
                decode_mixed_radix(idx, &domains, &mut state);
                belief.prob(&state)
            })
            .collect();
        Ok(Self {
            strides: strides_for(&domains),
            domains,
            probs,
        })
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn index_of(&self, state: &[usize]) -> usize {
        state.iter().zip(&self.strides).map(|(v, s)| v * s).sum()
    }

    pub fn decode(&self, index: usize, out: &mut [usize]) {
        decode_mixed_radix(index, &self.domains, out);
    }

    pub fn prob(&self, state: &[usize]) -> f64 {
        self.probs[self.index_of(state)]
    }

    /// Marginal over `vars`, mixed-radix indexed in the given order.
    pub fn marginal(&self, vars: &[usize]) -> Vec<f64> {
        let out_domains: Vec<usize> = vars.iter().map(|&v| self.domains[v]).collect();
        let out_strides = strides_for(&out_domains);
        let mut out = vec![0.0; out_domains.iter().product()];
        let mut state = vec![0usize; self.domains.len()];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            decode_mixed_radix(idx, &self.domains, &mut state);
            let o: usize = vars.iter().zip(&out_strides).map(|(&v, s)| state[v] * s).sum();
            out[o] += p;
        }
        out
    }
}
