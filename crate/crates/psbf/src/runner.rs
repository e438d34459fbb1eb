//! Runs one or more filters side by side on a sampled trajectory of a process,
//! with the exact filter as the accuracy oracle when the joint fits.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use psbf_core::clustering::{auto_cluster, Strategy};
use psbf_core::exec::{Clock, Executor};
use psbf_core::filter::{
    bk_step, kl_factored, kl_particles, pf_step, psbf_step, FilterConfig, ParticleSet, SparseTransition,
    StepContext, StepStats,
};
use psbf_core::passivity::{detect_all, PassivityReport};
use psbf_core::{ActionDbn, Clustering, FactorLayout, FactoredBelief, JointBelief, Process};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterKind {
    Psbf,
    Bk,
    Pf,
    Exact,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Psbf => "psbf",
            FilterKind::Bk => "bk",
            FilterKind::Pf => "pf",
            FilterKind::Exact => "exact",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "psbf" => Ok(FilterKind::Psbf),
            "bk" => Ok(FilterKind::Bk),
            "pf" => Ok(FilterKind::Pf),
            "exact" => Ok(FilterKind::Exact),
            other => Err(format!("unknown filter `{other}` (expected psbf, bk, pf or exact)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub steps: usize,
    pub seed: u64,
    pub particles: usize,
    /// Largest joint state space for which the exact oracle runs.
    pub exact_cap: usize,
    pub filter: FilterConfig,
    /// When false every timing field is reported as zero.
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            seed: 0,
            particles: 1000,
            exact_cap: 1 << 12,
            filter: FilterConfig::default(),
            timing: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub action: String,
    pub filter: FilterKind,
    pub transition_us: f64,
    pub observation_us: f64,
    pub overhead_us: f64,
    pub factors_skipped: usize,
    pub factors_total: usize,
    pub kl_bits: Option<f64>,
}

impl StepRecord {
    pub fn total_us(&self) -> f64 {
        self.transition_us + self.observation_us + self.overhead_us
    }
}

/// Ground-truth run: the chosen action, next state and observation per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub initial: Vec<usize>,
    pub actions: Vec<usize>,
    pub states: Vec<Vec<usize>>,
    pub observations: Vec<Vec<usize>>,
}

/// Samples a start state uniformly, then picks an action uniformly at random
/// each step and samples the transition and observation.
pub fn sample_trajectory(process: &Process, steps: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial: Vec<usize> = process.domains().iter().map(|&d| rng.random_range(0..d)).collect();
    let mut state = initial.clone();
    let mut out = Trajectory {
        initial,
        actions: Vec::with_capacity(steps),
        states: Vec::with_capacity(steps),
        observations: Vec::with_capacity(steps),
    };
    for _ in 0..steps {
        let a = rng.random_range(0..process.actions().len());
        let dbn = &process.actions()[a];
        state = dbn.sample_transition(&state, &mut rng);
        let o = dbn.sample_observation(&state, &mut rng);
        out.actions.push(a);
        out.states.push(state.clone());
        out.observations.push(o);
    }
    out
}

/// Uniform start belief as particles: an even spread when every state can
/// hold at least one particle, random draws otherwise.
fn initial_particles(domains: &[usize], n: usize, rng: &mut ChaCha8Rng) -> ParticleSet {
    let size: u128 = domains.iter().map(|&d| d as u128).product();
    if size <= n as u128 {
        ParticleSet::stratified(domains, n)
    } else {
        ParticleSet::uniform(domains, n, rng)
    }
}

/// Named clustering of the process, or one of `singleton`, `components`,
/// `max:L` computed from the actions.
pub fn resolve_clustering(process: &Process, name: &str) -> Result<Clustering, String> {
    if let Some(c) = process.clustering(name) {
        return Ok(c.clone());
    }
    let strategy = parse_strategy(name)?;
    auto_cluster(process.actions(), strategy).map_err(|e| e.to_string())
}

pub fn parse_strategy(name: &str) -> Result<Strategy, String> {
    match name {
        "singleton" => Ok(Strategy::Singleton),
        "components" => Ok(Strategy::Components),
        _ => match name.strip_prefix("max:").map(str::parse::<usize>) {
            Some(Ok(l)) if l > 0 => Ok(Strategy::MaxSize(l)),
            _ => Err(format!("unknown clustering `{name}` (expected a clustering in the file, singleton, components or max:L)")),
        },
    }
}

fn micros(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

enum State {
    Factored(FactoredBelief),
    Particles(ParticleSet),
    Exact,
}

/// Oracle state shared by all filters in a run.
struct Oracle {
    belief: JointBelief,
    transitions: HashMap<usize, SparseTransition>,
}

impl Oracle {
    fn new(process: &Process, cap: usize) -> Option<Self> {
        let size: u128 = process.domains().iter().map(|&d| d as u128).product();
        if size > cap as u128 {
            return None;
        }
        let belief = JointBelief::uniform(process.domains(), cap).ok()?;
        Some(Self {
            belief,
            transitions: HashMap::new(),
        })
    }

    fn step(&mut self, a: usize, dbn: &ActionDbn, o: &[usize], cap: usize) -> psbf_core::Result<()> {
        let t = match self.transitions.entry(a) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(SparseTransition::build(dbn, cap)?),
        };
        self.belief = t.step(&self.belief, dbn, o)?;
        Ok(())
    }
}

fn pf_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (step as u64 + 1)
}

/// Runs `filters` in lockstep over the trajectory sampled from `config.seed`.
/// Records come out step-major, in the order of `filters`.
pub fn run_filters<E: Executor, C: Clock>(
    process: &Process,
    clustering: &Clustering,
    filters: &[FilterKind],
    config: &RunConfig,
    exec: &E,
    clock: &C,
) -> psbf_core::Result<Vec<StepRecord>> {
    let trajectory = sample_trajectory(process, config.steps, config.seed);
    let layout: Arc<FactorLayout> = FactorLayout::new(clustering.clone(), process.domains())?;
    let reports: Vec<PassivityReport> = process.actions().iter().map(detect_all).collect();
    let ctx = StepContext::new(exec, clock, config.filter);
    let mut oracle = Oracle::new(process, config.exact_cap);
    if filters.contains(&FilterKind::Exact) && oracle.is_none() {
        let size: u128 = process.domains().iter().map(|&d| d as u128).product();
        return Err(psbf_core::Error::StateSpaceTooLarge {
            size,
            cap: config.exact_cap,
        });
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5E_ED0F_9A27);
    let mut states: Vec<State> = filters
        .iter()
        .map(|f| match f {
            FilterKind::Psbf | FilterKind::Bk => State::Factored(FactoredBelief::uniform(layout.clone())),
            FilterKind::Pf => State::Particles(initial_particles(&process.domains(), config.particles.max(1), &mut init_rng)),
            FilterKind::Exact => State::Exact,
        })
        .collect();

    let mut records = Vec::with_capacity(config.steps * filters.len());
    for step in 0..config.steps {
        let a = trajectory.actions[step];
        let dbn = &process.actions()[a];
        let o = &trajectory.observations[step];
        let exact_start = clock.mark();
        if let Some(oracle) = oracle.as_mut() {
            oracle.step(a, dbn, o, config.exact_cap)?;
        }
        let exact_time = clock.since(exact_start);

        for (kind, state) in filters.iter().zip(states.iter_mut()) {
            let (stats, kl) = match state {
                State::Factored(belief) => {
                    let (next, stats) = match kind {
                        FilterKind::Psbf => psbf_step(&ctx, belief, dbn, o, &reports[a])?,
                        _ => bk_step(&ctx, belief, dbn, o)?,
                    };
                    *belief = next;
                    let kl = oracle.as_ref().map(|x| kl_factored(&x.belief, belief));
                    (stats, kl)
                }
                State::Particles(particles) => {
                    let start = clock.mark();
                    *particles = pf_step(exec, particles, dbn, o, pf_seed(config.seed, step), config.filter.on_zero_likelihood)?;
                    let stats = StepStats {
                        transition_time: clock.since(start),
                        ..StepStats::default()
                    };
                    let kl = oracle.as_ref().map(|x| kl_particles(&x.belief, particles));
                    (stats, kl)
                }
                State::Exact => (
                    StepStats {
                        transition_time: exact_time,
                        ..StepStats::default()
                    },
                    Some(0.0),
                ),
            };
            let time = |d| if config.timing { micros(d) } else { 0.0 };
            records.push(StepRecord {
                step: step + 1,
                action: dbn.name().to_owned(),
                filter: *kind,
                transition_us: time(stats.transition_time),
                observation_us: time(stats.observation_time),
                overhead_us: time(stats.overhead_time),
                factors_skipped: stats.factors_skipped,
                factors_total: stats.factors_total,
                kl_bits: kl,
            });
        }
    }
    Ok(records)
}
