//! Clusterings of the state variables and the two assumptions that make the
//! per-factor transition step exact: no intra-slice edge crosses a cluster
//! boundary (A1) and clusters are disjoint (A2).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::belief::FactoredBelief;
use crate::dbn::{decode_mixed_radix, strides_for, ActionDbn, Cpt, Node};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clustering {
    clusters: Vec<Vec<usize>>,
    owners: Vec<Vec<usize>>,
}

impl Clustering {
    /// Fails if a cluster is empty, names a variable twice or out of range,
    /// or if the clusters do not cover all `num_vars` variables.
    pub fn new(num_vars: usize, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let mut owners = vec![Vec::new(); num_vars];
        for (k, c) in clusters.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::InvalidClustering(format!("cluster {k} is empty")));
            }
            for &i in c {
                if i >= num_vars {
                    return Err(Error::InvalidClustering(format!("cluster {k} names unknown variable {i}")));
                }
                if owners[i].last() == Some(&k) {
                    return Err(Error::InvalidClustering(format!("cluster {k} lists variable {i} twice")));
                }
                owners[i].push(k);
            }
        }
        if let Some(i) = owners.iter().position(Vec::is_empty) {
            return Err(Error::InvalidClustering(format!("variable {i} is in no cluster")));
        }
        Ok(Self { clusters, owners })
    }

    pub fn singletons(num_vars: usize) -> Self {
        Self::new(num_vars, (0..num_vars).map(|i| vec![i]).collect()).unwrap()
    }

    pub fn single(num_vars: usize) -> Self {
        Self::new(num_vars, vec![(0..num_vars).collect()]).unwrap()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn cluster(&self, k: usize) -> &[usize] {
        &self.clusters[k]
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.owners.len()
    }

    /// Clusters containing variable `i`, ascending.
    pub fn owners(&self, i: usize) -> &[usize] {
        &self.owners[i]
    }

    /// A2: clusters are pairwise disjoint.
    pub fn is_disjoint(&self) -> bool {
        self.owners.iter().all(|o| o.len() == 1)
    }
}

pub fn check_a2(clustering: &Clustering) -> bool {
    clustering.is_disjoint()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct A1Violation {
    pub action: String,
    pub var: usize,
    pub parent: usize,
    pub cluster: usize,
}

/// Lists every intra-slice parent lying outside a cluster of its child.
pub fn check_a1(clustering: &Clustering, dbns: &[ActionDbn]) -> Vec<A1Violation> {
    let mut out = Vec::new();
    for dbn in dbns {
        for (k, cluster) in clustering.clusters().iter().enumerate() {
            for &i in cluster {
                for parent in dbn.pa_next(i) {
                    if !cluster.contains(&parent) {
                        out.push(A1Violation {
                            action: dbn.name().into(),
                            var: i,
                            parent,
                            cluster: k,
                        });
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClusterStatus {
    pub a1: bool,
    pub a2: bool,
}

pub fn status(clustering: &Clustering, dbns: &[ActionDbn]) -> ClusterStatus {
    ClusterStatus {
        a1: check_a1(clustering, dbns).is_empty(),
        a2: check_a2(clustering),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Singleton,
    Components,
    MaxSize(usize),
}

/// Undirected intra-slice edge counts, summed over actions.
fn intra_weights(dbns: &[ActionDbn], n: usize) -> Vec<BTreeMap<usize, usize>> {
    let mut w = vec![BTreeMap::new(); n];
    for dbn in dbns {
        for i in 0..n {
            for j in dbn.pa_next(i) {
                if i != j {
                    *w[i].entry(j).or_insert(0) += 1;
                    *w[j].entry(i).or_insert(0) += 1;
                }
            }
        }
    }
    w
}

fn components_of(members: &[usize], weights: &[BTreeMap<usize, usize>]) -> Vec<Vec<usize>> {
    let inside: BTreeSet<usize> = members.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &root in members {
        if !seen.insert(root) {
            continue;
        }
        let mut comp = vec![root];
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &u in weights[v].keys() {
                if inside.contains(&u) && seen.insert(u) {
                    comp.push(u);
                    stack.push(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Greedy split: grow a part from the lowest remaining variable by adding the
/// neighbour with the most edges into the part (ties to lowest index) until
/// it holds `limit` variables, then recurse on what is left.
fn split_component(comp: Vec<usize>, limit: usize, weights: &[BTreeMap<usize, usize>], out: &mut Vec<Vec<usize>>) {
    if comp.len() <= limit {
        out.push(comp);
        return;
    }
    let mut part = vec![comp[0]];
    let mut rest: BTreeSet<usize> = comp[1..].iter().copied().collect();
    while part.len() < limit {
        let best = rest
            .iter()
            .map(|&c| {
                let links: usize = part.iter().map(|p| weights[c].get(p).copied().unwrap_or(0)).sum();
                (links, c)
            })
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let Some((_, c)) = best else { break };
        part.push(c);
        rest.remove(&c);
    }
    part.sort_unstable();
    out.push(part);
    let rest: Vec<usize> = rest.into_iter().collect();
    for sub in components_of(&rest, weights) {
        split_component(sub, limit, weights, out);
    }
}

pub fn auto_cluster(dbns: &[ActionDbn], strategy: Strategy) -> Result<Clustering> {
    let n = dbns
        .first()
        .map(ActionDbn::num_state)
        .ok_or_else(|| Error::InvalidParameter("process has no actions".into()))?;
    if n == 0 {
        return Err(Error::InvalidParameter("process has no state variables".into()));
    }
    let weights = intra_weights(dbns, n);
    let all: Vec<usize> = (0..n).collect();
    let mut clusters = match strategy {
        Strategy::Singleton => return Ok(Clustering::singletons(n)),
        Strategy::Components => components_of(&all, &weights),
        Strategy::MaxSize(limit) => {
            if limit < 1 {
                return Err(Error::InvalidParameter("max cluster size must be at least 1".into()));
            }
            let mut out = Vec::new();
            for comp in components_of(&all, &weights) {
                split_component(comp, limit, &weights, &mut out);
            }
            out
        }
    };
    clusters.sort_by_key(|c| c[0]);
    Clustering::new(n, clusters)
}

/// How the out-of-cluster intra-slice parents are weighted when they are
/// summed out of a CPT.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MarginalWeights {
    /// One-step lookahead marginals under the current prior.
    #[default]
    Lookahead,
    Uniform,
}

/// An action whose CPTs were rewritten so that A1 holds for a clustering.
#[derive(Clone, Debug)]
pub struct MarginalizedAction<'a> {
    base: &'a ActionDbn,
    modified: BTreeMap<usize, Cpt>,
}

impl<'a> MarginalizedAction<'a> {
    pub fn unmodified(base: &'a ActionDbn) -> Self {
        Self {
            base,
            modified: BTreeMap::new(),
        }
    }

    pub fn base(&self) -> &'a ActionDbn {
        self.base
    }

    pub fn modified_vars(&self) -> BTreeSet<usize> {
        self.modified.keys().copied().collect()
    }

    pub fn modified_cpts(&self) -> &BTreeMap<usize, Cpt> {
        &self.modified
    }

    /// Effective CPT of `x_i^{t+1}`.
    #[inline]
    pub fn state_cpt(&self, i: usize) -> &Cpt {
        self.modified.get(&i).unwrap_or_else(|| self.base.state_cpt(i))
    }

    /// Materializes the effective DBN (edges follow the replacement CPTs).
    pub fn to_dbn(&self) -> Result<ActionDbn> {
        self.base.with_state_cpts(self.modified.values().cloned())
    }
}

/// For each variable, its intra-slice parents outside its cluster.
/// Requires disjoint clusters.
pub fn out_of_cluster_parents(dbn: &ActionDbn, clustering: &Clustering) -> Result<Vec<BTreeSet<usize>>> {
    if !clustering.is_disjoint() {
        return Err(Error::OverlappingClusters);
    }
    Ok((0..dbn.num_state())
        .map(|i| {
            let k = clustering.owners(i)[0];
            dbn.pa_next(i).filter(|&j| clustering.owners(j)[0] != k).collect()
        })
        .collect())
}

/// Replaces the CPT of every variable with out-of-cluster intra-slice
/// parents by one that sums those parents out.
pub fn marginalize<'a>(
    dbn: &'a ActionDbn,
    clustering: &Clustering,
    prior: &FactoredBelief,
    weights: MarginalWeights,
) -> Result<MarginalizedAction<'a>> {
    let outside = out_of_cluster_parents(dbn, clustering)?;
    marginalize_selected(dbn, &outside, prior, weights, |_| true)
}

/// As [`marginalize`], restricted to variables accepted by `wanted`, given
/// precomputed out-of-cluster parent sets.
pub(crate) fn marginalize_selected<'a>(
    dbn: &'a ActionDbn,
    outside: &[BTreeSet<usize>],
    prior: &FactoredBelief,
    weights: MarginalWeights,
    wanted: impl Fn(usize) -> bool,
) -> Result<MarginalizedAction<'a>> {
    let mut lookahead = Lookahead {
        dbn,
        prior,
        weights,
        memo: vec![None; dbn.num_state()],
    };
    let mut modified = BTreeMap::new();
    for (i, dropped) in outside.iter().enumerate() {
        if dropped.is_empty() || !wanted(i) {
            continue;
        }
        let qs: Vec<(usize, Vec<f64>)> = dropped.iter().map(|&j| (j, lookahead.marginal(j))).collect();
        modified.insert(i, sum_out(dbn, i, &qs)?);
    }
    Ok(MarginalizedAction { base: dbn, modified })
}

/// Builds `P̃(x_i | pa \ D) = Σ_d Π_j q_j(d_j) P(x_i | pa, d)`.
fn sum_out(dbn: &ActionDbn, i: usize, qs: &[(usize, Vec<f64>)]) -> Result<Cpt> {
    let cpt = dbn.state_cpt(i);
    let parents = cpt.parents();
    let dropped: Vec<Node> = qs.iter().map(|(j, _)| Node::Next(*j)).collect();
    let kept: Vec<Node> = parents.iter().copied().filter(|p| !dropped.contains(p)).collect();
    let kept_pos: Vec<usize> = kept
        .iter()
        .map(|k| parents.iter().position(|p| p == k).unwrap())
        .collect();
    let drop_pos: Vec<usize> = dropped
        .iter()
        .map(|d| parents.iter().position(|p| p == d).unwrap())
        .collect();
    let kept_domains: Vec<usize> = kept_pos.iter().map(|&p| cpt.parent_domains()[p]).collect();
    let drop_domains: Vec<usize> = drop_pos.iter().map(|&p| cpt.parent_domains()[p]).collect();
    let full_strides = strides_for(cpt.parent_domains());
    let d = cpt.child_domain();

    let kept_rows: usize = kept_domains.iter().product();
    let drop_rows: usize = drop_domains.iter().product();
    let mut probs = vec![0.0; kept_rows * d];
    let mut kv = vec![0usize; kept.len()];
    let mut dv = vec![0usize; dropped.len()];
    for r in 0..kept_rows {
        decode_mixed_radix(r, &kept_domains, &mut kv);
        let base: usize = kept_pos.iter().zip(&kv).map(|(&p, &v)| v * full_strides[p]).sum();
        let out = &mut probs[r * d..(r + 1) * d];
        for a in 0..drop_rows {
            decode_mixed_radix(a, &drop_domains, &mut dv);
            let w: f64 = qs.iter().zip(&dv).map(|((_, q), &v)| q[v]).product();
            if w == 0.0 {
                continue;
            }
            let full = base + drop_pos.iter().zip(&dv).map(|(&p, &v)| v * full_strides[p]).sum::<usize>();
            for (o, &p) in out.iter_mut().zip(cpt.row(full)) {
                *o += w * p;
            }
        }
        let total: f64 = out.iter().sum();
        for o in out.iter_mut() {
            *o = (*o / total).clamp(0.0, 1.0);
        }
    }
    let mut replacement = Cpt::new(Node::Next(i), kept, probs);
    replacement.bind(dbn.state_vars(), dbn.obs_vars())?;
    Ok(replacement)
}

/// One-step lookahead marginals `q_j` of `x_j^{t+1}` under the prior, with
/// intra-slice parents integrated out recursively as independent.
struct Lookahead<'a> {
    dbn: &'a ActionDbn,
    prior: &'a FactoredBelief,
    weights: MarginalWeights,
    memo: Vec<Option<Vec<f64>>>,
}

impl Lookahead<'_> {
    fn marginal(&mut self, j: usize) -> Vec<f64> {
        if let Some(q) = &self.memo[j] {
            return q.clone();
        }
        let domain = self.dbn.state_vars()[j].domain;
        let q = match self.weights {
            MarginalWeights::Uniform => vec![1.0 / domain as f64; domain],
            MarginalWeights::Lookahead => self.compute(j),
        };
        self.memo[j] = Some(q.clone());
        q
    }

    fn compute(&mut self, j: usize) -> Vec<f64> {
        let cpt = self.dbn.state_cpt(j);
        let parents = cpt.parents().to_vec();
        let now_vars: Vec<usize> = self.dbn.pa_now(j).collect();
        let now_domains: Vec<usize> = now_vars.iter().map(|&v| self.dbn.state_vars()[v].domain).collect();
        let now_strides = strides_for(&now_domains);
        let now_weights = self.prior.joint_weights(&now_vars);
        let next_q: Vec<(usize, Vec<f64>)> = self
            .dbn
            .pa_next(j)
            .collect::<Vec<_>>()
            .into_iter()
            .map(|p| (p, self.marginal(p)))
            .collect();

        let d = cpt.child_domain();
        let mut out = vec![0.0; d];
        let mut values = vec![0usize; parents.len()];
        for r in 0..cpt.num_rows() {
            cpt.decode_row(r, &mut values);
            let mut now_idx = 0;
            let mut w = 1.0;
            for (p, &v) in parents.iter().zip(&values) {
                match *p {
                    Node::Now(x) => {
                        let pos = now_vars.iter().position(|&u| u == x).unwrap();
                        now_idx += v * now_strides[pos];
                    }
                    Node::Next(x) => {
                        w *= next_q.iter().find(|(u, _)| *u == x).unwrap().1[v];
                    }
                    Node::Obs(_) => {}
                }
            }
            w *= now_weights[now_idx];
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(cpt.row(r)) {
                *o += w * p;
            }
        }
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|p| *p /= total);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::FactorLayout;
    use crate::dbn::{DbnBuilder, VarSpec};

    fn vars(n: usize) -> Vec<VarSpec> {
        (0..n).map(|k| VarSpec::binary(format!("x{}", k + 1))).collect()
    }

    fn det(b: bool) -> f64 {
        f64::from(u8::from(b))
    }

    fn chain(n: usize) -> ActionDbn {
        let mut b = DbnBuilder::new("chain", vars(n), Vec::new()).identity(0).unwrap();
        for i in 1..n {
            b = b
                .cpt_fn(Node::Next(i), vec![Node::Now(i), Node::Next(i - 1)], |pv, v| {
                    if pv[1] == 1 { det(pv[0] != v) } else { det(pv[0] == v) }
                })
                .unwrap();
        }
        b.build().unwrap()
    }

    fn no_edges(n: usize) -> ActionDbn {
        let mut b = DbnBuilder::new("free", vars(n), Vec::new());
        for i in 0..n {
            b = b.identity(i).unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn a1_and_a2_checks() {
        let dbns = [chain(3)];
        assert!(!check_a1(&Clustering::singletons(3), &dbns).is_empty());
        assert!(check_a1(&Clustering::single(3), &dbns).is_empty());
        let comps = auto_cluster(&dbns, Strategy::Components).unwrap();
        assert_eq!(comps.clusters(), &[vec![0, 1, 2]]);
        assert!(check_a1(&comps, &dbns).is_empty());

        assert!(check_a2(&Clustering::new(3, vec![vec![0], vec![1, 2]]).unwrap()));
        assert!(!check_a2(&Clustering::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap()));
        assert!(check_a2(&Clustering::single(3)));
    }

    #[test]
    fn components_without_edges_are_singletons() {
        let c = auto_cluster(&[no_edges(4)], Strategy::Components).unwrap();
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn max_size_cuts_chain_once() {
        let dbns = [chain(4)];
        let c = auto_cluster(&dbns, Strategy::MaxSize(2)).unwrap();
        assert_eq!(c.clusters(), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(check_a1(&c, &dbns).len(), 1);
        assert!(matches!(
            auto_cluster(&dbns, Strategy::MaxSize(0)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn invalid_clusterings_are_rejected() {
        assert!(Clustering::new(2, vec![vec![0]]).is_err());
        assert!(Clustering::new(2, vec![vec![0, 1, 1]]).is_err());
        assert!(Clustering::new(2, vec![vec![0, 1], vec![]]).is_err());
        assert!(Clustering::new(2, vec![vec![0, 2]]).is_err());
    }

    #[test]
    fn satisfied_a1_needs_no_marginalization() {
        let dbn = chain(3);
        let c = Clustering::single(3);
        let layout = FactorLayout::new(c.clone(), vec![2; 3]).unwrap();
        let prior = FactoredBelief::uniform(layout);
        let m = marginalize(&dbn, &c, &prior, MarginalWeights::Lookahead).unwrap();
        assert!(m.modified_vars().is_empty());
        for i in 0..3 {
            assert_eq!(m.state_cpt(i), dbn.state_cpt(i));
        }
    }

    #[test]
    fn uniform_parent_gives_even_mixture() {
        // x1 uniform under prior and copies itself; x2 depends on x1'
        let dbn = DbnBuilder::new("m", vars(2), Vec::new())
            .identity(0)
            .unwrap()
            .cpt_fn(Node::Next(1), vec![Node::Now(1), Node::Next(0)], |pv, v| {
                let p1 = [[0.9, 0.1], [0.3, 0.7], [0.6, 0.4], [0.2, 0.8]][pv[0] * 2 + pv[1]];
                p1[v]
            })
            .unwrap()
            .build()
            .unwrap();
        let c = Clustering::singletons(2);
        let prior = FactoredBelief::uniform(FactorLayout::new(c.clone(), vec![2, 2]).unwrap());
        let m = marginalize(&dbn, &c, &prior, MarginalWeights::Lookahead).unwrap();
        assert_eq!(m.modified_vars(), [1].into_iter().collect());
        let cpt = m.state_cpt(1);
        assert_eq!(cpt.parents(), &[Node::Now(1)]);
        let expect = [0.5 * 0.9 + 0.5 * 0.3, 0.5 * 0.6 + 0.5 * 0.2];
        assert!((cpt.row(0)[0] - expect[0]).abs() < 1e-15);
        assert!((cpt.row(1)[0] - expect[1]).abs() < 1e-15);

        // idempotent on its own output
        let eff = m.to_dbn().unwrap();
        assert!(eff.validate().is_valid());
        let again = marginalize(&eff, &c, &prior, MarginalWeights::Lookahead).unwrap();
        assert!(again.modified_vars().is_empty());
    }

    #[test]
    fn overlapping_clusters_cannot_be_marginalized() {
        let dbn = chain(2);
        let c = Clustering::new(2, vec![vec![0, 1], vec![1]]).unwrap();
        let prior = FactoredBelief::uniform(FactorLayout::new(c.clone(), vec![2, 2]).unwrap());
        assert_eq!(
            marginalize(&dbn, &c, &prior, MarginalWeights::Lookahead).unwrap_err(),
            Error::OverlappingClusters
        );
    }
}
