use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::{FilterConfig, StepStats, ZeroLikelihood};
use crate::belief::FactoredBelief;
use crate::clustering::{marginalize_selected, out_of_cluster_parents, MarginalizedAction};
use crate::dbn::{decode_mixed_radix, ActionDbn, Cpt, Node};
use crate::error::{Error, Result};
use crate::exec::{Clock, Executor, NoClock, Sequential};
use crate::passivity::{cluster_skippable, PassivityReport};

/// Worker pool, clock and policy shared by the factored filter steps.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a, E, C> {
    pub exec: &'a E,
    pub clock: &'a C,
    pub config: FilterConfig,
}

impl StepContext<'static, Sequential, NoClock> {
    pub fn sequential() -> Self {
        Self {
            exec: &Sequential,
            clock: &NoClock,
            config: FilterConfig::default(),
        }
    }
}

impl<'a, E: Executor, C: Clock> StepContext<'a, E, C> {
    pub fn new(exec: &'a E, clock: &'a C, config: FilterConfig) -> Self {
        Self { exec, clock, config }
    }
}

/// Propagates factor `k` through the (A1-enforced) action:
/// `b̂_k(s'_k) ∝ Σ_{s̄} T_k(s̄, s'_k) Π_{k'} b_{k'}(s̄_{k'})`.
pub fn factor_transition(prior: &FactoredBelief, act: &MarginalizedAction<'_>, k: usize) -> Result<Vec<f64>> {
    let layout = prior.layout();
    let cluster = layout.clustering().cluster(k);
    let dbn = act.base();
    let n = dbn.num_state();

    let mut in_cluster = vec![false; n];
    cluster.iter().for_each(|&i| in_cluster[i] = true);

    let order: Vec<usize> = dbn.next_order().iter().copied().filter(|&i| in_cluster[i]).collect();
    let cpts: Vec<&Cpt> = order.iter().map(|&i| act.state_cpt(i)).collect();
    let mut parents_now = BTreeSet::new();
    for cpt in &cpts {
        for p in cpt.parents() {
            match *p {
                Node::Now(j) => {
                    parents_now.insert(j);
                }
                Node::Next(j) if !in_cluster[j] => {
                    return Err(Error::InvalidClustering(alloc::format!(
                        "x{} in cluster {k} has intra-slice parent x{j} outside it",
                        crate::dbn::node_index(cpt.child())
                    )));
                }
                _ => {}
            }
        }
    }
    let parents_now: Vec<usize> = parents_now.into_iter().collect();
    let parent_domains: Vec<usize> = parents_now.iter().map(|&j| layout.domains()[j]).collect();
    let weights = prior.joint_weights(&parents_now);

    let strides: Vec<usize> = order
        .iter()
        .map(|i| {
            let pos = cluster.iter().position(|c| c == i).unwrap();
            layout.cluster_strides(k)[pos]
        })
        .collect();

    let mut walk = Walk {
        order: &order,
        cpts: &cpts,
        strides: &strides,
        now: vec![0; n],
        next: vec![0; n],
        out: vec![0.0; layout.factor_len(k)],
    };
    let mut values = vec![0usize; parents_now.len()];
    for (idx, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        decode_mixed_radix(idx, &parent_domains, &mut values);
        for (&j, &v) in parents_now.iter().zip(&values) {
            walk.now[j] = v;
        }
        walk.descend(0, w, 0);
    }
    let mut out = walk.out;
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateTransition { cluster: k });
    }
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// Depth-first enumeration of the cluster's next values, pruning zero entries.
struct Walk<'w> {
    order: &'w [usize],
    cpts: &'w [&'w Cpt],
    strides: &'w [usize],
    now: Vec<usize>,
    next: Vec<usize>,
    out: Vec<f64>,
}

impl Walk<'_> {
    fn descend(&mut self, depth: usize, mass: f64, index: usize) {
        if depth == self.order.len() {
            self.out[index] += mass;
            return;
        }
        let i = self.order[depth];
        let cpt = self.cpts[depth];
        let r = cpt.row_index(&self.now, &self.next, &[]);
        let stride = self.strides[depth];
        for v in 0..cpt.child_domain() {
            let p = cpt.row(r)[v];
            if p == 0.0 {
                continue;
            }
            self.next[i] = v;
            self.descend(depth + 1, mass * p, index + v * stride);
        }
    }
}

/// Observation variables with at least one state parent in cluster `k`.
fn observations_touching(dbn: &ActionDbn, cluster: &[usize]) -> Vec<usize> {
    (0..dbn.num_obs())
        .filter(|&j| {
            dbn.obs_cpt(j)
                .parents()
                .iter()
                .any(|p| matches!(p, Node::Next(i) if cluster.contains(i)))
        })
        .collect()
}

/// Conditions factor `k` on `o`. Out-of-cluster state parents of each
/// relevant observation are summed out under the predicted factors.
///
/// Returns the new factor and whether it was reset to uniform.
pub fn factor_observe(
    predicted: &FactoredBelief,
    dbn: &ActionDbn,
    k: usize,
    o: &[usize],
    policy: ZeroLikelihood,
) -> Result<(Vec<f64>, bool)> {
    let layout = predicted.layout();
    let cluster = layout.clustering().cluster(k);
    let touching = observations_touching(dbn, cluster);
    let mut out = predicted.factor(k).to_vec();
    if touching.is_empty() {
        return Ok((out, false));
    }

    struct Evidence<'c> {
        cpt: &'c Cpt,
        value: usize,
        outside: Vec<usize>,
        // nonzero (assignment, weight) pairs over `outside`
        support: Vec<(Vec<usize>, f64)>,
    }
    let evidence: Vec<Evidence<'_>> = touching
        .iter()
        .map(|&j| {
            let cpt = dbn.obs_cpt(j);
            let outside: Vec<usize> = cpt
                .parents()
                .iter()
                .filter_map(|p| match *p {
                    Node::Next(i) if !cluster.contains(&i) => Some(i),
                    _ => None,
                })
                .collect();
            let domains: Vec<usize> = outside.iter().map(|&i| layout.domains()[i]).collect();
            let weights = predicted.joint_weights(&outside);
            let support = weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(idx, &w)| {
                    let mut values = vec![0; outside.len()];
                    decode_mixed_radix(idx, &domains, &mut values);
                    (values, w)
                })
                .collect();
            Evidence {
                cpt,
                value: o[j],
                outside,
                support,
            }
        })
        .collect();

    let mut next = vec![0usize; dbn.num_state()];
    for (idx, p) in out.iter_mut().enumerate() {
        if *p == 0.0 {
            continue;
        }
        layout.scatter(k, idx, &mut next);
        for ev in &evidence {
            let mut likelihood = 0.0;
            for (values, w) in &ev.support {
                for (&i, &v) in ev.outside.iter().zip(values) {
                    next[i] = v;
                }
                likelihood += w * ev.cpt.row(ev.cpt.row_index(&[], &next, o))[ev.value];
            }
            *p *= likelihood;
            if *p == 0.0 {
                break;
            }
        }
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|p| *p /= total);
        return Ok((out, false));
    }
    match policy {
        ZeroLikelihood::Error => Err(Error::ImpossibleObservation { cluster: Some(k) }),
        ZeroLikelihood::UniformReset => {
            let len = out.len();
            Ok((vec![1.0 / len as f64; len], true))
        }
    }
}

/// Selective step: transition updates are skipped for every cluster whose
/// unmodified members are passive and unreachable from active variables.
pub fn psbf_step<E: Executor, C: Clock>(
    ctx: &StepContext<'_, E, C>,
    belief: &FactoredBelief,
    dbn: &ActionDbn,
    o: &[usize],
    analysis: &PassivityReport,
) -> Result<(FactoredBelief, StepStats)> {
    factored_step(ctx, belief, dbn, o, Some(analysis))
}

/// Boyen–Koller step: every factor is propagated and conditioned.
pub fn bk_step<E: Executor, C: Clock>(
    ctx: &StepContext<'_, E, C>,
    belief: &FactoredBelief,
    dbn: &ActionDbn,
    o: &[usize],
) -> Result<(FactoredBelief, StepStats)> {
    factored_step(ctx, belief, dbn, o, None)
}

fn factored_step<E: Executor, C: Clock>(
    ctx: &StepContext<'_, E, C>,
    belief: &FactoredBelief,
    dbn: &ActionDbn,
    o: &[usize],
    analysis: Option<&PassivityReport>,
) -> Result<(FactoredBelief, StepStats)> {
    dbn.check_obs(o)?;
    let layout = belief.layout().clone();
    let clustering = layout.clustering();
    let num_clusters = clustering.len();
    let clock = ctx.clock;

    let started = clock.mark();
    let outside = if clustering.is_disjoint() {
        Some(out_of_cluster_parents(dbn, clustering)?)
    } else {
        None
    };
    let modified: BTreeSet<usize> = outside
        .iter()
        .flat_map(|d| d.iter().enumerate().filter(|(_, s)| !s.is_empty()).map(|(i, _)| i))
        .collect();
    let skipped: Vec<bool> = match analysis {
        Some(report) => (0..num_clusters)
            .map(|k| cluster_skippable(report, clustering.cluster(k), &modified))
            .collect(),
        None => vec![false; num_clusters],
    };
    let act = match &outside {
        Some(outside) if !modified.is_empty() => marginalize_selected(
            dbn,
            outside,
            belief,
            ctx.config.marginal_weights,
            |i| !skipped[clustering.owners(i)[0]],
        )?,
        _ => MarginalizedAction::unmodified(dbn),
    };
    let overhead_time = clock.since(started);

    let started = clock.mark();
    let predicted = ctx.exec.map(num_clusters, |k| {
        if skipped[k] {
            Ok(belief.factor(k).to_vec())
        } else {
            factor_transition(belief, &act, k)
        }
    });
    let predicted = FactoredBelief::from_parts_unchecked(layout.clone(), predicted.into_iter().collect::<Result<_>>()?);
    let transition_time = clock.since(started);

    let started = clock.mark();
    let policy = ctx.config.on_zero_likelihood;
    let observed = ctx.exec.map(num_clusters, |k| factor_observe(&predicted, dbn, k, o, policy));
    let mut factors = Vec::with_capacity(num_clusters);
    let mut resets = 0;
    for r in observed {
        let (f, reset) = r?;
        resets += usize::from(reset);
        factors.push(f);
    }
    let observation_time = clock.since(started);

    let stats = StepStats {
        factors_total: num_clusters,
        factors_skipped: skipped.iter().filter(|&&s| s).count(),
        transition_time,
        observation_time,
        overhead_time,
        resets,
    };
    Ok((FactoredBelief::from_parts_unchecked(layout, factors), stats))
}
