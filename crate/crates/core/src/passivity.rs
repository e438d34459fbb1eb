//! Passivity detection and causal-path reachability.
//!
//! A variable `x_i` is passive under an action if some set `Φ` of its time-t
//! parents, each also wired in through its time-t+1 copy, must change before
//! `x_i` can change. The detector checks only the largest admissible `Φ`:
//! the implication "Φ unchanged ⇒ x_i unchanged" only gets easier to satisfy
//! as `Φ` grows, so one scan of the CPT decides the question.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::dbn::{ActionDbn, Node, PROB_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Active,
    Passive,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassivityVerdict {
    pub var: usize,
    pub status: Status,
    /// Time-t variables the verdict is relative to; empty when active.
    pub phi: BTreeSet<usize>,
}

impl PassivityVerdict {
    pub fn is_passive(&self) -> bool {
        self.status == Status::Passive
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassivityReport {
    pub action: alloc::string::String,
    pub verdicts: Vec<PassivityVerdict>,
    /// Variables reachable by a causal path from an active variable,
    /// including the active variables themselves.
    pub reachable: BTreeSet<usize>,
}

impl PassivityReport {
    pub fn is_passive(&self, i: usize) -> bool {
        self.verdicts[i].is_passive()
    }

    pub fn passive_count(&self) -> usize {
        self.verdicts.iter().filter(|v| v.is_passive()).count()
    }

    pub fn is_reachable(&self, i: usize) -> bool {
        self.reachable.contains(&i)
    }
}

/// The largest `Φ` satisfying the edge clause: time-t parents `x_j^t`
/// (other than `x_i^t`) whose time-t+1 copy is also a parent.
pub fn phi_max(dbn: &ActionDbn, i: usize) -> BTreeSet<usize> {
    let next: BTreeSet<usize> = dbn.pa_next(i).collect();
    dbn.pa_now(i).filter(|&j| j != i && next.contains(&j)).collect()
}

pub fn detect_passive(dbn: &ActionDbn, i: usize) -> PassivityVerdict {
    let active = PassivityVerdict {
        var: i,
        status: Status::Active,
        phi: BTreeSet::new(),
    };
    let cpt = dbn.state_cpt(i);
    let parents = cpt.parents();
    let Some(self_pos) = parents.iter().position(|&p| p == Node::Now(i)) else {
        if dbn.state_vars()[i].domain == 1 {
            return PassivityVerdict {
                var: i,
                status: Status::Passive,
                phi: phi_max(dbn, i),
            };
        }
        return active;
    };

    let phi = phi_max(dbn, i);
    let pairs: Vec<(usize, usize)> = phi
        .iter()
        .map(|&j| {
            let now = parents.iter().position(|&p| p == Node::Now(j)).unwrap();
            let next = parents.iter().position(|&p| p == Node::Next(j)).unwrap();
            (now, next)
        })
        .collect();

    let mut values = vec![0usize; parents.len()];
    for r in 0..cpt.num_rows() {
        cpt.decode_row(r, &mut values);
        if pairs.iter().all(|&(a, b)| values[a] == values[b])
            && cpt.row(r)[values[self_pos]] < 1.0 - PROB_TOL
        {
            return active;
        }
    }
    PassivityVerdict {
        var: i,
        status: Status::Passive,
        phi,
    }
}

pub fn detect_all(dbn: &ActionDbn) -> PassivityReport {
    let verdicts: Vec<PassivityVerdict> = (0..dbn.num_state()).map(|i| detect_passive(dbn, i)).collect();

    // children[j] = passive variables whose Φ contains j (edge x_j' -> x_i' exists by clause (i))
    let mut children = vec![Vec::new(); verdicts.len()];
    for v in &verdicts {
        for &j in &v.phi {
            children[j].push(v.var);
        }
    }
    let mut reachable = BTreeSet::new();
    let mut queue: VecDeque<usize> = verdicts.iter().filter(|v| !v.is_passive()).map(|v| v.var).collect();
    reachable.extend(queue.iter().copied());
    while let Some(j) = queue.pop_front() {
        for &c in &children[j] {
            if reachable.insert(c) {
                queue.push_back(c);
            }
        }
    }

    PassivityReport {
        action: dbn.name().into(),
        verdicts,
        reachable,
    }
}

/// Transition skip rule: every member not in `modified` is passive and no
/// member is reachable from an active variable.
pub fn cluster_skippable(report: &PassivityReport, cluster: &[usize], modified: &BTreeSet<usize>) -> bool {
    cluster
        .iter()
        .all(|i| modified.contains(i) || report.is_passive(*i))
        && cluster.iter().all(|i| !report.is_reachable(*i))
}
