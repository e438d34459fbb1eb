//! Random synthetic processes with a controlled share of passive variables.
//!
//! Variables are grouped into consecutive blocks; intra-slice edges (and
//! therefore `components` clusters) never leave a block. Within each action
//! the passive variables fill whole blocks, in a seeded random block order,
//! from the lowest index up: the first passive variable of a block never
//! changes, every later one is passive with respect to one earlier member.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::clustering::{auto_cluster, Strategy};
use crate::dbn::{decode_mixed_radix, ActionDbn, Cpt, DbnBuilder, Node, VarSpec};
use crate::error::{Error, Result};
use crate::passivity::detect_all;
use crate::process::{NamedClustering, Process};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    S,
    M,
    L,
    XL,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::S, Preset::M, Preset::L, Preset::XL];

    /// (state variables, observation variables)
    pub fn sizes(self) -> (usize, usize) {
        match self {
            Preset::S => (10, 3),
            Preset::M => (20, 6),
            Preset::L => (30, 9),
            Preset::XL => (40, 12),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::S => "S",
            Preset::M => "M",
            Preset::L => "L",
            Preset::XL => "XL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub n: usize,
    pub m: usize,
    pub passivity_pct: f64,
    pub actions: usize,
    /// Cap on time-t parents of active variables and on state parents of
    /// observation variables.
    pub max_parents: usize,
    /// Random CPT rows are drawn from a symmetric Dirichlet with
    /// concentration `1 / determinism`; larger values give peakier rows.
    pub determinism: f64,
    /// Probability of each optional intra-slice edge between block members.
    pub intra_edge_prob: f64,
    pub block_size: usize,
    /// Probability mass an observation spreads over wrong readings.
    pub obs_noise: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn preset(preset: Preset, passivity_pct: f64, seed: u64) -> Self {
        let (n, m) = preset.sizes();
        Self {
            n,
            m,
            passivity_pct,
            actions: 2,
            max_parents: 3,
            determinism: 1.0,
            intra_edge_prob: 0.1,
            block_size: 3,
            obs_noise: 0.15,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.into()));
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be at least 1");
        }
        if !(0.0..=100.0).contains(&self.passivity_pct) {
            return bad("passivity must lie in [0, 100]");
        }
        if self.actions == 0 {
            return bad("at least one action is required");
        }
        if self.max_parents == 0 {
            return bad("max_parents must be at least 1");
        }
        if !(self.determinism > 0.0) {
            return bad("determinism must be positive");
        }
        if self.block_size == 0 {
            return bad("block_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.intra_edge_prob) || !(0.0..1.0).contains(&self.obs_noise) {
            return bad("probabilities out of range");
        }
        Ok(())
    }

    pub fn passive_count(&self) -> usize {
        libm::round(self.n as f64 * self.passivity_pct / 100.0) as usize
    }
}

fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, len: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut row: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
    let total: f64 = row.iter().sum();
    if total > 0.0 && total.is_finite() {
        row.iter_mut().for_each(|p| *p /= total);
    } else {
        let hot = rng.random_range(0..len);
        row.iter_mut().enumerate().for_each(|(k, p)| *p = f64::from(u8::from(k == hot)));
    }
    row
}

fn random_cpt<R: Rng + ?Sized>(
    child: Node,
    parents: Vec<Node>,
    state: &[VarSpec],
    concentration: f64,
    rng: &mut R,
) -> Result<Cpt> {
    let d = state[crate::dbn::node_index(child)].domain;
    let mut row = Vec::new();
    Cpt::from_fn(child, parents, state, &[], |_, v| {
        if v == 0 {
            row = dirichlet_row(rng, d, concentration);
        }
        row[v]
    })
}

fn intra_ancestors(dbn: &ActionDbn, j: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![j];
    while let Some(v) = stack.pop() {
        for p in dbn.pa_next(v) {
            if seen.insert(p) {
                stack.push(p);
            }
        }
    }
    seen
}

/// Rewires `x_i^{t+1}` to be passive with respect to `phi`: adds the parents
/// `x_i^t`, `x_j^t` and `x_j^{t+1}` for `j ∈ phi`; rows in which every `phi`
/// member keeps its value copy `x_i^t`, all other rows are random.
pub fn make_passive<R: Rng + ?Sized>(
    dbn: &ActionDbn,
    i: usize,
    phi: &BTreeSet<usize>,
    determinism: f64,
    rng: &mut R,
) -> Result<ActionDbn> {
    let n = dbn.num_state();
    if phi.is_empty() || phi.contains(&i) || phi.iter().any(|&j| j >= n) || i >= n {
        return Err(Error::InvalidParameter(format!(
            "phi must be a nonempty set of state variables other than x{i}"
        )));
    }
    if phi.iter().any(|&j| intra_ancestors(dbn, j).contains(&i)) {
        return Err(Error::CycleWouldForm {
            var: i,
            phi: phi.iter().copied().collect(),
        });
    }
    let mut parents: Vec<Node> = dbn.state_cpt(i).parents().to_vec();
    let mut require = |node: Node| {
        if !parents.contains(&node) {
            parents.push(node);
        }
    };
    require(Node::Now(i));
    for &j in phi {
        require(Node::Now(j));
        require(Node::Next(j));
    }
    let pos = |node: Node| parents.iter().position(|&p| p == node).unwrap();
    let self_pos = pos(Node::Now(i));
    let pairs: Vec<(usize, usize)> = phi.iter().map(|&j| (pos(Node::Now(j)), pos(Node::Next(j)))).collect();

    let state = dbn.state_vars();
    let domains: Vec<usize> = parents.iter().map(|&p| state[crate::dbn::node_index(p)].domain).collect();
    let d = state[i].domain;
    let rows: usize = domains.iter().product();
    let mut probs = Vec::with_capacity(rows * d);
    let mut values = vec![0usize; parents.len()];
    for r in 0..rows {
        decode_mixed_radix(r, &domains, &mut values);
        if pairs.iter().all(|&(a, b)| values[a] == values[b]) {
            probs.extend((0..d).map(|v| f64::from(u8::from(v == values[self_pos]))));
        } else {
            probs.extend(dirichlet_row(rng, d, 1.0 / determinism));
        }
    }
    dbn.with_state_cpts([Cpt::new(Node::Next(i), parents, probs)])
}

/// Makes `x_i^{t+1}` an exact copy of `x_i^t` (passive with empty `phi`).
pub fn make_static(dbn: &ActionDbn, i: usize) -> Result<ActionDbn> {
    let cpt = Cpt::from_fn(Node::Next(i), vec![Node::Now(i)], dbn.state_vars(), dbn.obs_vars(), |pv, v| {
        f64::from(u8::from(pv[0] == v))
    })?;
    dbn.with_state_cpts([cpt])
}

/// Which variables of one action are passive, and with respect to what.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Role {
    Active,
    Static,
    Follows(usize),
}

fn plan_roles<R: Rng + ?Sized>(params: &SynthParams, rng: &mut R) -> Vec<Role> {
    let n = params.n;
    let mut roles = vec![Role::Active; n];
    let blocks: Vec<(usize, usize)> = (0..n)
        .step_by(params.block_size)
        .map(|start| (start, (start + params.block_size).min(n)))
        .collect();
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.shuffle(rng);
    let mut left = params.passive_count();
    for b in order {
        let (start, end) = blocks[b];
        for i in start..end {
            if left == 0 {
                return roles;
            }
            roles[i] = if i == start {
                Role::Static
            } else {
                Role::Follows(rng.random_range(start..i))
            };
            left -= 1;
        }
    }
    roles
}

/// Random structure and CPTs come from `base`, which is consumed identically
/// for every passivity level; the passive set and passive rows come from
/// `roles_rng`. Raising the passivity therefore only rewires more variables
/// of the same base process.
fn build_action(
    params: &SynthParams,
    name: &str,
    state: &[VarSpec],
    obs: &[VarSpec],
    base: &mut ChaCha8Rng,
    roles_rng: &mut ChaCha8Rng,
) -> Result<ActionDbn> {
    let n = params.n;
    let roles = plan_roles(params, roles_rng);
    let rng = base;
    let concentration = 1.0 / params.determinism;
    let mut b = DbnBuilder::new(name, state.to_vec(), obs.to_vec());

    for (i, role) in roles.iter().enumerate() {
        let mut parents = vec![Node::Now(i)];
        let extra = rng.random_range(0..params.max_parents);
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.shuffle(rng);
        let mut picked: Vec<usize> = others.into_iter().take(extra).collect();
        picked.sort_unstable();
        parents.extend(picked.into_iter().map(Node::Now));
        let block_start = i - i % params.block_size;
        for j in block_start..i {
            if rng.random_bool(params.intra_edge_prob) {
                parents.push(Node::Next(j));
            }
        }
        let cpt = random_cpt(Node::Next(i), parents.clone(), state, concentration, rng)?;
        if *role != Role::Active {
            b = b.identity(i)?;
            continue;
        }
        b = b.cpt(cpt);
        for p in parents {
            b = b.edge(p, Node::Next(i));
        }
    }

    for j in 0..params.m {
        let count = rng.random_range(1..=params.max_parents.min(n));
        let mut vars: Vec<usize> = (0..n).collect();
        vars.shuffle(rng);
        let mut picked: Vec<usize> = vars.into_iter().take(count).collect();
        picked.sort_unstable();
        let dy = obs[j].domain;
        let noise = params.obs_noise;
        b = b.cpt_fn(Node::Obs(j), picked.into_iter().map(Node::Next).collect(), |pv, v| {
            let target = pv.iter().sum::<usize>() % dy;
            if dy == 1 {
                1.0
            } else if v == target {
                1.0 - noise
            } else {
                noise / (dy - 1) as f64
            }
        })?;
    }

    let mut dbn = b.build()?;
    for (i, role) in roles.iter().enumerate() {
        if let Role::Follows(j) = *role {
            dbn = make_passive(&dbn, i, &[j].into_iter().collect(), params.determinism, roles_rng)?;
        }
    }

    let report = detect_all(&dbn);
    for (i, role) in roles.iter().enumerate() {
        if *role != Role::Active && !report.is_passive(i) {
            return Err(Error::InvalidParameter(format!(
                "generated variable x{} should be passive in `{name}`",
                i + 1
            )));
        }
    }
    Ok(dbn)
}

/// Generates a process; the `components` clustering is attached.
pub fn generate(params: &SynthParams) -> Result<Process> {
    params.check()?;
    let stream = |id: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(id);
        rng
    };
    let state: Vec<VarSpec> = (0..params.n).map(|i| VarSpec::binary(format!("x{}", i + 1))).collect();
    let obs: Vec<VarSpec> = (0..params.m).map(|j| VarSpec::binary(format!("y{}", j + 1))).collect();
    let actions = (0..params.actions)
        .map(|a| {
            let (mut base, mut roles) = (stream(2 * a as u64), stream(2 * a as u64 + 1));
            build_action(params, &format!("a{}", a + 1), &state, &obs, &mut base, &mut roles)
        })
        .collect::<Result<Vec<_>>>()?;
    let components = auto_cluster(&actions, Strategy::Components)?;
    let name = format!(
        "synth-n{}-m{}-p{}-s{}",
        params.n, params.m, params.passivity_pct, params.seed
    );
    Process::new(
        name,
        state,
        obs,
        actions,
        vec![NamedClustering {
            name: "components".into(),
            clustering: components,
        }],
    )
}
