//! Two-slice dynamic Bayesian networks, one per action.
//!
//! An [`ActionDbn`] relates the state at time `t` ([`Node::Now`]) to the state
//! at `t+1` ([`Node::Next`]) and the observation received at `t+1`
//! ([`Node::Obs`]). Every `Next` and `Obs` node owns exactly one [`Cpt`]. CPT
//! rows are addressed by the mixed-radix encoding of the parent values in the
//! CPT's declared parent order, most significant digit first.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance used for every normalization and determinism check.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarSpec {
    pub name: String,
    pub domain: usize,
}

impl VarSpec {
    pub fn new(name: impl Into<String>, domain: usize) -> Self {
        Self {
            name: name.into(),
            domain,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, 2)
    }
}

/// A node of the two-slice graph, identified by variable index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    /// `x_i^t`
    Now(usize),
    /// `x_i^{t+1}`
    Next(usize),
    /// `y_j^{t+1}`
    Obs(usize),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Now(i) => write!(f, "x[{i}]@t"),
            Node::Next(i) => write!(f, "x[{i}]@t1"),
            Node::Obs(j) => write!(f, "y[{j}]"),
        }
    }
}

/// Conditional probability table of one `Next` or `Obs` node.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpt {
    child: Node,
    parents: Vec<Node>,
    probs: Vec<f64>,
    child_domain: usize,
    parent_domains: Vec<usize>,
    strides: Vec<usize>,
}

impl Cpt {
    /// Creates an unbound table; domains are attached by [`ActionDbn::new`].
    /// `probs` holds the rows back to back.
    pub fn new(child: Node, parents: Vec<Node>, probs: Vec<f64>) -> Self {
        Self {
            child,
            parents,
            probs,
            child_domain: 0,
            parent_domains: Vec::new(),
            strides: Vec::new(),
        }
    }

    /// Builds a table by evaluating `f(parent_values, child_value)` for every
    /// row and child value.
    pub fn from_fn(
        child: Node,
        parents: Vec<Node>,
        state: &[VarSpec],
        obs: &[VarSpec],
        mut f: impl FnMut(&[usize], usize) -> f64,
    ) -> Result<Self> {
        let child_domain = node_domain(child, state, obs)?;
        let domains = parents
            .iter()
            .map(|&p| node_domain(p, state, obs))
            .collect::<Result<Vec<_>>>()?;
        let rows: usize = domains.iter().product();
        let mut probs = Vec::with_capacity(rows * child_domain);
        let mut values = vec![0usize; parents.len()];
        for r in 0..rows {
            decode_mixed_radix(r, &domains, &mut values);
            for v in 0..child_domain {
                probs.push(f(&values, v));
            }
        }
        let mut cpt = Self::new(child, parents, probs);
        cpt.bind(state, obs)?;
        Ok(cpt)
    }

    pub(crate) fn bind(&mut self, state: &[VarSpec], obs: &[VarSpec]) -> Result<()> {
        self.child_domain = node_domain(self.child, state, obs)?;
        self.parent_domains = self
            .parents
            .iter()
            .map(|&p| node_domain(p, state, obs))
            .collect::<Result<Vec<_>>>()?;
        self.strides = strides_for(&self.parent_domains);
        Ok(())
    }

    pub fn child(&self) -> Node {
        self.child
    }

    pub fn parents(&self) -> &[Node] {
        &self.parents
    }

    pub fn parent_domains(&self) -> &[usize] {
        &self.parent_domains
    }

    pub fn child_domain(&self) -> usize {
        self.child_domain
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of rows implied by the parent domains.
    pub fn num_rows(&self) -> usize {
        self.parent_domains.iter().product()
    }

    /// The probability vector over the child's domain for row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let d = self.child_domain;
        &self.probs[r * d..(r + 1) * d]
    }

    /// Decodes row `r` into parent values (declared parent order).
    pub fn decode_row(&self, r: usize, out: &mut [usize]) {
        decode_mixed_radix(r, &self.parent_domains, out);
    }

    /// Row index for the given slice values. `obs` may be empty for state CPTs.
    #[inline]
    pub fn row_index(&self, now: &[usize], next: &[usize], obs: &[usize]) -> usize {
        let mut r = 0;
        for (p, stride) in self.parents.iter().zip(&self.strides) {
            let v = match *p {
                Node::Now(j) => now[j],
                Node::Next(j) => next[j],
                Node::Obs(j) => obs[j],
            };
            r += v * stride;
        }
        r
    }

    /// Row index from a per-parent value accessor.
    #[inline]
    pub fn row_index_by(&self, mut value: impl FnMut(Node) -> usize) -> usize {
        self.parents
            .iter()
            .zip(&self.strides)
            .map(|(&p, s)| value(p) * s)
            .sum()
    }
}

fn node_domain(node: Node, state: &[VarSpec], obs: &[VarSpec]) -> Result<usize> {
    let spec = match node {
        Node::Now(i) | Node::Next(i) => state.get(i),
        Node::Obs(j) => obs.get(j),
    };
    spec.map(|s| s.domain).ok_or(Error::UnknownNode(node))
}

pub(crate) fn strides_for(domains: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; domains.len()];
    for k in (0..domains.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * domains[k + 1];
    }
    strides
}

pub(crate) fn decode_mixed_radix(mut index: usize, domains: &[usize], out: &mut [usize]) {
    for k in (0..domains.len()).rev() {
        let d = domains[k].max(1);
        out[k] = index % d;
        index /= d;
    }
}

/// One structural problem found by [`ActionDbn::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyDomain { node: Node },
    DuplicateName { name: String },
    EdgeClass { from: Node, to: Node },
    DuplicateEdge { from: Node, to: Node },
    Cycle { nodes: Vec<Node> },
    CptOnInputNode { node: Node },
    MissingCpt { node: Node },
    DuplicateCpt { node: Node },
    DuplicateParent { child: Node, parent: Node },
    ParentMismatch { child: Node, declared: Vec<Node>, from_edges: Vec<Node> },
    RowCount { child: Node, expected: usize, found: usize },
    EntryOutOfRange { child: Node, row: usize, value: f64 },
    RowNotNormalized { child: Node, row: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDomain { node } => write!(f, "{node}: domain size must be at least 1"),
            Violation::DuplicateName { name } => write!(f, "duplicate variable name `{name}`"),
            Violation::EdgeClass { from, to } => write!(f, "edge {from} -> {to} is not an allowed edge class"),
            Violation::DuplicateEdge { from, to } => write!(f, "edge {from} -> {to} declared twice"),
            Violation::Cycle { nodes } => {
                write!(f, "intra-slice cycle through")?;
                for n in nodes {
                    write!(f, " {n}")?;
                }
                Ok(())
            }
            Violation::CptOnInputNode { node } => write!(f, "{node} is a time-t node and cannot own a CPT"),
            Violation::MissingCpt { node } => write!(f, "{node} has no CPT"),
            Violation::DuplicateCpt { node } => write!(f, "{node} has more than one CPT"),
            Violation::DuplicateParent { child, parent } => write!(f, "{child}: parent {parent} listed twice"),
            Violation::ParentMismatch { child, .. } => write!(f, "{child}: CPT parents differ from incoming edges"),
            Violation::RowCount { child, expected, found } => {
                write!(f, "{child}: expected {expected} probabilities, found {found}")
            }
            Violation::EntryOutOfRange { child, row, value } => {
                write!(f, "{child}: row {row} has entry {value} outside [0, 1]")
            }
            Violation::RowNotNormalized { child, row, sum } => {
                write!(f, "{child}: row {row} sums to {sum}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// DBN describing the effect of one action.
#[derive(Clone, Debug)]
pub struct ActionDbn {
    name: String,
    state: Vec<VarSpec>,
    obs: Vec<VarSpec>,
    edges: Vec<(Node, Node)>,
    cpts: Vec<Cpt>,
    state_cpt: Vec<Option<usize>>,
    obs_cpt: Vec<Option<usize>>,
    next_order: Vec<usize>,
    obs_order: Vec<usize>,
}

impl ActionDbn {
    /// Assembles a DBN. Fails only when an edge or CPT refers to a variable
    /// that does not exist; every other structural problem is reported by
    /// [`ActionDbn::validate`].
    pub fn new(
        name: impl Into<String>,
        state: Vec<VarSpec>,
        obs: Vec<VarSpec>,
        edges: Vec<(Node, Node)>,
        mut cpts: Vec<Cpt>,
    ) -> Result<Self> {
        for &(a, b) in &edges {
            node_domain(a, &state, &obs)?;
            node_domain(b, &state, &obs)?;
        }
        for cpt in &mut cpts {
            cpt.bind(&state, &obs)?;
        }
        let mut state_cpt = vec![None; state.len()];
        let mut obs_cpt = vec![None; obs.len()];
        for (k, cpt) in cpts.iter().enumerate() {
            let slot = match cpt.child {
                Node::Next(i) => &mut state_cpt[i],
                Node::Obs(j) => &mut obs_cpt[j],
                Node::Now(_) => continue,
            };
            if slot.is_none() {
                *slot = Some(k);
            }
        }
        let mut dbn = Self {
            name: name.into(),
            state,
            obs,
            edges,
            cpts,
            state_cpt,
            obs_cpt,
            next_order: Vec::new(),
            obs_order: Vec::new(),
        };
        dbn.next_order = dbn.stable_order(|n| matches!(n, Node::Next(_)), dbn.state.len());
        dbn.obs_order = dbn.stable_order(|n| matches!(n, Node::Obs(_)), dbn.obs.len());
        Ok(dbn)
    }

    /// Orders one node class by (longest-path depth, declaration index) using
    /// CPT parents of the same class. Nodes on a cycle are appended last.
    fn stable_order(&self, same_class: impl Fn(Node) -> bool, count: usize) -> Vec<usize> {
        let parents_of = |k: usize| -> Vec<usize> {
            let cpt = if same_class(Node::Next(0)) {
                self.state_cpt[k]
            } else {
                self.obs_cpt[k]
            };
            cpt.map(|c| {
                self.cpts[c]
                    .parents
                    .iter()
                    .filter(|&&p| same_class(p))
                    .map(|&p| node_index(p))
                    .collect()
            })
            .unwrap_or_default()
        };
        let parents: Vec<Vec<usize>> = (0..count).map(parents_of).collect();
        let mut depth: Vec<Option<usize>> = vec![None; count];
        let mut changed = true;
        while changed {
            changed = false;
            for k in 0..count {
                if depth[k].is_some() {
                    continue;
                }
                let mut d = 0;
                let mut ready = true;
                for &p in &parents[k] {
                    match depth[p] {
                        Some(pd) => d = d.max(pd + 1),
                        None => {
                            ready = false;
                            break;
                        }
                    }
                }
                if ready {
                    depth[k] = Some(d);
                    changed = true;
                }
            }
        }
        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by_key(|&k| (depth[k].unwrap_or(usize::MAX), k));
        order
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_vars(&self) -> &[VarSpec] {
        &self.state
    }

    pub fn obs_vars(&self) -> &[VarSpec] {
        &self.obs
    }

    pub fn num_state(&self) -> usize {
        self.state.len()
    }

    pub fn num_obs(&self) -> usize {
        self.obs.len()
    }

    pub fn edges(&self) -> &[(Node, Node)] {
        &self.edges
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    /// CPT of `x_i^{t+1}`. Panics if the DBN has none (invalid DBN).
    pub fn state_cpt(&self, i: usize) -> &Cpt {
        &self.cpts[self.state_cpt[i].expect("state variable without CPT")]
    }

    /// CPT of `y_j^{t+1}`. Panics if the DBN has none (invalid DBN).
    pub fn obs_cpt(&self, j: usize) -> &Cpt {
        &self.cpts[self.obs_cpt[j].expect("observation variable without CPT")]
    }

    /// Stable topological order of `X^{t+1}`.
    pub fn next_order(&self) -> &[usize] {
        &self.next_order
    }

    /// Stable topological order of `Y^{t+1}`.
    pub fn obs_order(&self) -> &[usize] {
        &self.obs_order
    }

    /// Time-t parents of `x_i^{t+1}` in declared order.
    pub fn pa_now(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.state_cpt(i).parents.iter().filter_map(|p| match p {
            Node::Now(j) => Some(*j),
            _ => None,
        })
    }

    /// Intra-slice (time t+1) parents of `x_i^{t+1}` in declared order.
    pub fn pa_next(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.state_cpt(i).parents.iter().filter_map(|p| match p {
            Node::Next(j) => Some(*j),
            _ => None,
        })
    }

    pub fn has_edge(&self, from: Node, to: Node) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Returns a copy with the CPTs of the given state variables replaced.
    /// Edges into each replaced variable are rewritten to match the new
    /// parent list.
    pub fn with_state_cpts(&self, replacements: impl IntoIterator<Item = Cpt>) -> Result<Self> {
        let mut cpts = self.cpts.clone();
        let mut edges = self.edges.clone();
        for cpt in replacements {
            let Node::Next(i) = cpt.child else {
                return Err(Error::UnknownNode(cpt.child));
            };
            let slot = self.state_cpt[i].ok_or(Error::UnknownNode(cpt.child))?;
            edges.retain(|&(_, to)| to != cpt.child);
            edges.extend(cpt.parents.iter().map(|&p| (p, cpt.child)));
            cpts[slot] = cpt;
        }
        Self::new(self.name.clone(), self.state.clone(), self.obs.clone(), edges, cpts)
    }

    /// Lists every violated structural invariant; empty iff the DBN is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();

        let mut names = BTreeSet::new();
        for (k, spec) in self.state.iter().enumerate() {
            if spec.domain == 0 {
                out.push(Violation::EmptyDomain { node: Node::Next(k) });
            }
            if !names.insert(spec.name.as_str()) {
                out.push(Violation::DuplicateName { name: spec.name.clone() });
            }
        }
        for (k, spec) in self.obs.iter().enumerate() {
            if spec.domain == 0 {
                out.push(Violation::EmptyDomain { node: Node::Obs(k) });
            }
            if !names.insert(spec.name.as_str()) {
                out.push(Violation::DuplicateName { name: spec.name.clone() });
            }
        }

        let mut seen = BTreeSet::new();
        for &(from, to) in &self.edges {
            let allowed = matches!(
                (from, to),
                (Node::Now(_), Node::Next(_))
                    | (Node::Next(_), Node::Next(_))
                    | (Node::Next(_), Node::Obs(_))
                    | (Node::Obs(_), Node::Obs(_))
            );
            if !allowed {
                out.push(Violation::EdgeClass { from, to });
            }
            if !seen.insert((from, to)) {
                out.push(Violation::DuplicateEdge { from, to });
            }
        }

        if let Some(cycle) = self.find_edge_cycle() {
            out.push(Violation::Cycle { nodes: cycle });
        }

        let mut owners = BTreeSet::new();
        for cpt in &self.cpts {
            if matches!(cpt.child, Node::Now(_)) {
                out.push(Violation::CptOnInputNode { node: cpt.child });
                continue;
            }
            if !owners.insert(cpt.child) {
                out.push(Violation::DuplicateCpt { node: cpt.child });
            }
        }
        let targets = (0..self.state.len())
            .map(Node::Next)
            .chain((0..self.obs.len()).map(Node::Obs));
        for node in targets {
            if !owners.contains(&node) {
                out.push(Violation::MissingCpt { node });
            }
        }

        for cpt in &self.cpts {
            if matches!(cpt.child, Node::Now(_)) {
                continue;
            }
            let mut declared = BTreeSet::new();
            for &p in &cpt.parents {
                if !declared.insert(p) {
                    out.push(Violation::DuplicateParent { child: cpt.child, parent: p });
                }
            }
            let from_edges: BTreeSet<Node> = self
                .edges
                .iter()
                .filter(|&&(_, to)| to == cpt.child)
                .map(|&(from, _)| from)
                .collect();
            if declared != from_edges {
                out.push(Violation::ParentMismatch {
                    child: cpt.child,
                    declared: cpt.parents.clone(),
                    from_edges: from_edges.into_iter().collect(),
                });
            }

            let expected = cpt.num_rows() * cpt.child_domain;
            if cpt.probs.len() != expected {
                out.push(Violation::RowCount {
                    child: cpt.child,
                    expected,
                    found: cpt.probs.len(),
                });
                continue;
            }
            if cpt.child_domain == 0 {
                continue;
            }
            for (r, row) in cpt.probs.chunks(cpt.child_domain).enumerate() {
                let mut sum = 0.0;
                for &p in row {
                    if !(0.0..=1.0).contains(&p) {
                        out.push(Violation::EntryOutOfRange { child: cpt.child, row: r, value: p });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    out.push(Violation::RowNotNormalized { child: cpt.child, row: r, sum });
                }
            }
        }

        ValidationReport { violations: out }
    }

    /// Finds a cycle among the edges within `X^{t+1} ∪ Y^{t+1}`.
    fn find_edge_cycle(&self) -> Option<Vec<Node>> {
        let n = self.state.len();
        let total = n + self.obs.len();
        let id = |node: Node| match node {
            Node::Next(i) => Some(i),
            Node::Obs(j) => Some(n + j),
            Node::Now(_) => None,
        };
        let mut adj = vec![Vec::new(); total];
        for &(from, to) in &self.edges {
            if let (Some(a), Some(b)) = (id(from), id(to)) {
                adj[a].push(b);
            }
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut color = vec![0u8; total];
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut path: Vec<usize> = Vec::new();
        for root in 0..total {
            if color[root] != 0 {
                continue;
            }
            stack.push((root, 0));
            color[root] = 1;
            path.push(root);
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next < adj[v].len() {
                    let w = adj[v][*next];
                    *next += 1;
                    match color[w] {
                        0 => {
                            color[w] = 1;
                            stack.push((w, 0));
                            path.push(w);
                        }
                        1 => {
                            let start = path.iter().position(|&p| p == w).unwrap_or(0);
                            let to_node = |k: usize| if k < n { Node::Next(k) } else { Node::Obs(k - n) };
                            return Some(path[start..].iter().map(|&k| to_node(k)).collect());
                        }
                        _ => {}
                    }
                } else {
                    color[v] = 2;
                    stack.pop();
                    path.pop();
                }
            }
        }
        None
    }

    pub fn check_state(&self, s: &[usize]) -> Result<()> {
        check_values(&self.state, s)
    }

    pub fn check_obs(&self, o: &[usize]) -> Result<()> {
        check_values(&self.obs, o)
    }

    /// `T^a(s, s')`: product over state variables of their CPT entries with
    /// time-t parents read from `s` and time-t+1 parents from `s_next`.
    pub fn transition_prob(&self, s: &[usize], s_next: &[usize]) -> Result<f64> {
        self.check_state(s)?;
        self.check_state(s_next)?;
        Ok(self.transition_prob_unchecked(s, s_next))
    }

    pub(crate) fn transition_prob_unchecked(&self, s: &[usize], s_next: &[usize]) -> f64 {
        let mut p = 1.0;
        for i in 0..self.state.len() {
            let cpt = self.state_cpt(i);
            p *= cpt.row(cpt.row_index(s, s_next, &[]))[s_next[i]];
            if p == 0.0 {
                break;
            }
        }
        p
    }

    /// `Ω^a(s', o)`: product over observation variables of their CPT entries.
    pub fn observation_prob(&self, s_next: &[usize], o: &[usize]) -> Result<f64> {
        self.check_state(s_next)?;
        self.check_obs(o)?;
        Ok(self.observation_prob_unchecked(s_next, o))
    }

    pub(crate) fn observation_prob_unchecked(&self, s_next: &[usize], o: &[usize]) -> f64 {
        let mut p = 1.0;
        for j in 0..self.obs.len() {
            let cpt = self.obs_cpt(j);
            p *= cpt.row(cpt.row_index(&[], s_next, o))[o[j]];
            if p == 0.0 {
                break;
            }
        }
        p
    }

    /// Samples `s'` from `T^a(s, ·)`, visiting variables in [`Self::next_order`].
    pub fn sample_transition<R: Rng + ?Sized>(&self, s: &[usize], rng: &mut R) -> Vec<usize> {
        let mut next = vec![0usize; self.state.len()];
        for &i in &self.next_order {
            let cpt = self.state_cpt(i);
            next[i] = sample_index(cpt.row(cpt.row_index(s, &next, &[])), rng);
        }
        next
    }

    /// Samples `o` from `Ω^a(s', ·)`, visiting variables in [`Self::obs_order`].
    pub fn sample_observation<R: Rng + ?Sized>(&self, s_next: &[usize], rng: &mut R) -> Vec<usize> {
        let mut o = vec![0usize; self.obs.len()];
        for &j in &self.obs_order {
            let cpt = self.obs_cpt(j);
            o[j] = sample_index(cpt.row(cpt.row_index(&[], s_next, &o)), rng);
        }
        o
    }
}

pub(crate) fn node_index(node: Node) -> usize {
    match node {
        Node::Now(i) | Node::Next(i) | Node::Obs(i) => i,
    }
}

fn check_values(specs: &[VarSpec], values: &[usize]) -> Result<()> {
    if specs.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: specs.len(),
            found: values.len(),
        });
    }
    for (var, (spec, &value)) in specs.iter().zip(values).enumerate() {
        if value >= spec.domain {
            return Err(Error::ValueOutOfRange {
                var,
                value,
                domain: spec.domain,
            });
        }
    }
    Ok(())
}

/// Draws an index from a probability vector by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = k;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}

/// Incremental builder; `cpt_fn` adds the matching edges automatically.
#[derive(Clone, Debug)]
pub struct DbnBuilder {
    name: String,
    state: Vec<VarSpec>,
    obs: Vec<VarSpec>,
    edges: Vec<(Node, Node)>,
    cpts: Vec<Cpt>,
}

impl DbnBuilder {
    pub fn new(name: impl Into<String>, state: Vec<VarSpec>, obs: Vec<VarSpec>) -> Self {
        Self {
            name: name.into(),
            state,
            obs,
            edges: Vec::new(),
            cpts: Vec::new(),
        }
    }

    pub fn edge(mut self, from: Node, to: Node) -> Self {
        self.edges.push((from, to));
        self
    }

    /// Adds a CPT without touching the edge list.
    pub fn cpt(mut self, cpt: Cpt) -> Self {
        self.cpts.push(cpt);
        self
    }

    pub fn cpt_fn(
        mut self,
        child: Node,
        parents: Vec<Node>,
        f: impl FnMut(&[usize], usize) -> f64,
    ) -> Result<Self> {
        let cpt = Cpt::from_fn(child, parents, &self.state, &self.obs, f)?;
        self.edges.extend(cpt.parents.iter().map(|&p| (p, child)));
        self.cpts.push(cpt);
        Ok(self)
    }

    /// `x_i^{t+1}` copies `x_i^t`.
    pub fn identity(self, i: usize) -> Result<Self> {
        self.cpt_fn(Node::Next(i), vec![Node::Now(i)], |pv, v| f64::from(u8::from(pv[0] == v)))
    }

    pub fn build(self) -> Result<ActionDbn> {
        ActionDbn::new(self.name, self.state, self.obs, self.edges, self.cpts)
    }
}
