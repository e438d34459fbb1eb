//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria run one after another so the timing ones have the
//! machine to themselves.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use psbf::bench::{bench_process, run_bench, summarize, BenchPlan};
use psbf::pool::{RayonExecutor, WallClock};
use psbf::report::{self, Format};
use psbf::runner::{run_filters, sample_trajectory, FilterKind, RunConfig};
use psbf::specfile;
use psbf_core::clustering::{check_a1, MarginalizedAction};
use psbf_core::dbn::{ActionDbn, Node};
use psbf_core::filter::{
    bk_step, exact_step, factor_transition, pf_step, psbf_step, FilterConfig, ParticleSet, StepContext, ZeroLikelihood,
};
use psbf_core::passivity::{cluster_skippable, detect_all};
use psbf_core::synth::{generate, make_passive, make_static, Preset, SynthParams};
use psbf_core::warehouse::{self, WarehouseConfig};
use psbf_core::{FactorLayout, FactoredBelief, JointBelief, Process, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

const CAP: usize = 1 << 12;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn synth(preset: Preset, n: usize, m: usize, pct: f64, seed: u64) -> Process {
    let mut params = SynthParams::preset(preset, pct, seed);
    params.n = n;
    params.m = m;
    generate(&params).expect("generator parameters are valid")
}

fn components(process: &Process) -> Arc<FactorLayout> {
    let clustering = process.clustering("components").expect("generated processes carry components").clone();
    FactorLayout::new(clustering, process.domains()).unwrap()
}

fn random_prior(layout: &Arc<FactorLayout>, rng: &mut ChaCha8Rng) -> FactoredBelief {
    let factors = (0..layout.num_clusters())
        .map(|k| {
            let raw: Vec<f64> = (0..layout.factor_len(k)).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect();
    FactoredBelief::from_factors(layout.clone(), factors).unwrap()
}

fn without_observations(dbn: &ActionDbn) -> ActionDbn {
    let edges = dbn
        .edges()
        .iter()
        .copied()
        .filter(|&(a, b)| !matches!(a, Node::Obs(_)) && !matches!(b, Node::Obs(_)))
        .collect();
    let cpts = (0..dbn.num_state()).map(|i| dbn.state_cpt(i).clone()).collect();
    ActionDbn::new(dbn.name(), dbn.state_vars().to_vec(), Vec::new(), edges, cpts).unwrap()
}

fn random_obs(dbn: &ActionDbn, rng: &mut ChaCha8Rng) -> Vec<usize> {
    dbn.obs_vars().iter().map(|v| rng.random_range(0..v.domain)).collect()
}

fn transition_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut factors = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..=10);
        let pct = f64::from(rng.random_range(0..4u32) * 20);
        let process = synth(Preset::S, n, 2, pct, seed);
        let layout = components(&process);
        if !check_a1(layout.clustering(), process.actions()).is_empty() {
            return Err(format!("process {seed}: components clustering violates A1"));
        }
        let prior = random_prior(&layout, &mut rng);
        let joint = JointBelief::from_factored(&prior, 1 << 10).unwrap();
        for dbn in process.actions() {
            let next = exact_step(&joint, &without_observations(dbn), &[]).unwrap();
            let act = MarginalizedAction::unmodified(dbn);
            for k in 0..layout.num_clusters() {
                let got = factor_transition(&prior, &act, k).unwrap();
                worst = worst.max(max_abs_diff(&got, &next.marginal(layout.clustering().cluster(k))));
                factors += 1;
            }
        }
    }
    check(worst <= 1e-10, format!("100 processes, {factors} factors, max error {worst:.2e} (tol 1e-10)"))
}

/// Rewires every action so that all members of cluster `k` are passive: the
/// first member keeps its value, the others follow it.
fn force_passive_cluster(process: &Process, cluster: &[usize], rng: &mut ChaCha8Rng) -> Vec<ActionDbn> {
    process
        .actions()
        .iter()
        .map(|dbn| {
            let mut dbn = make_static(dbn, cluster[0]).unwrap();
            let anchor: BTreeSet<usize> = [cluster[0]].into();
            for &i in &cluster[1..] {
                dbn = make_passive(&dbn, i, &anchor, 1.0, rng).unwrap();
            }
            dbn
        })
        .collect()
}

fn skip_equals_full_update() -> Outcome {
    let ctx = StepContext::sequential();
    let mut worst_skip = 0.0f64;
    let mut worst_equiv = 0.0f64;
    let mut skipped = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7131);
        let n = rng.random_range(4..=10);
        let pct = f64::from(rng.random_range(0..4u32) * 20);
        let process = synth(Preset::S, n, 2, pct, seed);
        let layout = components(&process);
        let k = rng.random_range(0..layout.num_clusters());
        let cluster = layout.clustering().cluster(k).to_vec();
        let dbns = force_passive_cluster(&process, &cluster, &mut rng);
        if !check_a1(layout.clustering(), &dbns).is_empty() {
            return Err(format!("process {seed}: rewiring broke A1"));
        }
        let prior = random_prior(&layout, &mut rng);
        for dbn in &dbns {
            let analysis = detect_all(dbn);
            if !cluster.iter().all(|&i| analysis.verdicts[i].status == Status::Passive)
                || !cluster_skippable(&analysis, &cluster, &BTreeSet::new())
            {
                return Err(format!("process {seed}: constructed cluster not skippable"));
            }
            let full = factor_transition(&prior, &MarginalizedAction::unmodified(dbn), k).unwrap();
            worst_skip = worst_skip.max(max_abs_diff(&full, prior.factor(k)));
            let o = random_obs(dbn, &mut rng);
            let (p, stats) = psbf_step(&ctx, &prior, dbn, &o, &analysis).unwrap();
            let (b, _) = bk_step(&ctx, &prior, dbn, &o).unwrap();
            worst_equiv = worst_equiv.max(p.max_abs_diff(&b));
            skipped += stats.factors_skipped;
        }
    }
    let worst = worst_skip.max(worst_equiv);
    check(
        worst <= 1e-12,
        format!(
            "100 processes, {skipped} skipped factors, skip error {worst_skip:.2e}, psbf-vs-bk {worst_equiv:.2e} (tol 1e-12)"
        ),
    )
}

fn assignments(domains: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = domains.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut s = vec![0; domains.len()];
    for _ in 0..total {
        out.push(s.clone());
        for (k, &d) in domains.iter().enumerate().rev() {
            s[k] += 1;
            if s[k] < d {
                break;
            }
            s[k] = 0;
        }
    }
    out
}

fn passivity_soundness() -> Outcome {
    let mut confirmed = 0;
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a55);
        let n = rng.random_range(1..=6);
        let pct = f64::from(rng.random_range(0..=10u32) * 10);
        let mut params = SynthParams::preset(Preset::S, pct, seed);
        params.n = n;
        params.m = 1;
        params.actions = 1;
        params.block_size = rng.random_range(1..=3);
        params.intra_edge_prob = rng.random_range(0.0..0.6);
        let process = generate(&params).unwrap();
        let dbn = &process.actions()[0];
        let states = assignments(&process.domains());
        let transitions: Vec<(&Vec<usize>, &Vec<usize>)> = states
            .iter()
            .flat_map(|s| states.iter().map(move |t| (s, t)))
            .filter(|(s, t)| dbn.transition_prob(s, t).unwrap() > 0.0)
            .collect();
        for v in detect_all(dbn).verdicts.iter().filter(|v| v.status == Status::Passive) {
            let i = v.var;
            let structural = v
                .phi
                .iter()
                .all(|&j| j != i && dbn.has_edge(Node::Now(j), Node::Next(i)) && dbn.has_edge(Node::Next(j), Node::Next(i)));
            if !structural {
                return Err(format!("dbn {seed}: x{} violates clause (i) for phi {:?}", i + 1, v.phi));
            }
            for (s, t) in &transitions {
                if v.phi.iter().all(|&j| s[j] == t[j]) && s[i] != t[i] {
                    return Err(format!("dbn {seed}: x{} changes while its phi stays fixed", i + 1));
                }
            }
            confirmed += 1;
        }
    }
    let swap = specfile::read(&specs_dir().join("swap.spec")).map_err(|e| e.to_string())?;
    let swap_active = detect_all(&swap.actions()[0]).verdicts.iter().all(|v| v.status == Status::Active);
    check(
        swap_active,
        format!("500 DBNs, {confirmed} passive verdicts confirmed by enumeration, swap classified active: {swap_active}"),
    )
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn accuracy_trend() -> Outcome {
    const PROCESSES: u64 = 50;
    const STEPS: usize = 100;
    let exec = RayonExecutor::new(1).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut overall = std::collections::BTreeMap::new();
    for pct in [0.0, 20.0, 40.0, 60.0] {
        let mut traj = [vec![0.0; STEPS], vec![0.0; STEPS]];
        for k in 0..PROCESSES {
            let process = bench_process(Preset::S, pct, k).unwrap();
            let layout = components(&process);
            let config = RunConfig {
                steps: STEPS,
                seed: k,
                timing: false,
                ..RunConfig::default()
            };
            let records = run_filters(
                &process,
                layout.clustering(),
                &[FilterKind::Psbf, FilterKind::Bk],
                &config,
                &exec,
                &WallClock,
            )
            .unwrap();
            for r in records {
                let f = usize::from(r.filter == FilterKind::Bk);
                traj[f][r.step - 1] += r.kl_bits.unwrap() / PROCESSES as f64;
            }
        }
        let (p, b) = (traj[0][STEPS - 1], traj[1][STEPS - 1]);
        let rel = (p - b).abs() / p.max(b).max(f64::MIN_POSITIVE);
        let mut bounded = true;
        for t in &traj {
            for step in 20..STEPS {
                bounded &= t[step] <= 3.0 * median(&t[..=step]);
            }
        }
        ok &= rel < 0.10 && bounded;
        overall.insert(pct as u32, [traj[0].iter().sum::<f64>() / STEPS as f64, traj[1].iter().sum::<f64>() / STEPS as f64]);
        lines.push(format!("{pct}%: final psbf {p:.4} bk {b:.4} rel {rel:.3}, bounded {bounded}"));
    }
    let trend = (0..2).all(|f| overall[&60][f] >= overall[&0][f]);
    ok &= trend;
    lines.push(format!(
        "mean KL 0% psbf {:.4} bk {:.4}, 60% psbf {:.4} bk {:.4}",
        overall[&0][0], overall[&0][1], overall[&60][0], overall[&60][1]
    ));
    check(ok, lines.join("; "))
}

fn timing_trend() -> Outcome {
    let plan = BenchPlan {
        presets: vec![Preset::S, Preset::M],
        filters: vec![FilterKind::Psbf, FilterKind::Bk],
        processes: 50,
        steps: 100,
        repeats: 3,
        exact_cap: 0,
        ..BenchPlan::default()
    };
    let rows = summarize(&run_bench(&plan).map_err(|e| e.to_string())?);
    let time = |preset: &str, pct: f64, filter: &str| {
        rows.iter()
            .find(|r| r.preset == preset && r.passivity_pct == pct && r.filter == filter)
            .map(|r| r.mean_step_us)
            .unwrap()
    };
    let mut ok = true;
    let mut lines = Vec::new();
    for preset in ["S", "M"] {
        let psbf: Vec<f64> = plan.passivities.iter().map(|&p| time(preset, p, "psbf")).collect();
        let bk: Vec<f64> = plan.passivities.iter().map(|&p| time(preset, p, "bk")).collect();
        let monotone = psbf.windows(2).all(|w| w[1] <= w[0]);
        let faster = psbf[3] <= bk[3];
        let overhead = psbf[0] <= 1.15 * bk[0];
        ok &= monotone && faster && overhead;
        let pairs: Vec<String> = psbf.iter().zip(&bk).map(|(p, b)| format!("{p:.1}/{b:.1}")).collect();
        lines.push(format!(
            "{preset} psbf/bk us at 0,20,40,60: {} (monotone {monotone}, 60% faster {faster}, 0% within 1.15x {overhead})",
            pairs.join(" ")
        ));
    }
    check(ok, lines.join("; "))
}

#[derive(PartialEq)]
struct Snapshot {
    psbf: Vec<Vec<u64>>,
    bk: Vec<Vec<u64>>,
    pf: Vec<Vec<u64>>,
}

fn bits(factors: &[Vec<f64>]) -> Vec<u64> {
    factors.iter().flatten().map(|x| x.to_bits()).collect()
}

fn particle_bits(set: &ParticleSet) -> Vec<u64> {
    let mut out: Vec<u64> = set.weights().iter().map(|w| w.to_bits()).collect();
    out.extend((0..set.len()).flat_map(|k| set.particle(k).iter().map(|&v| v as u64)));
    out
}

fn run_snapshot(process: &Process, seed: u64, threads: usize) -> Snapshot {
    let exec = RayonExecutor::new(threads).unwrap();
    let ctx = StepContext::new(&exec, &WallClock, FilterConfig::default());
    let layout = components(process);
    let traj = sample_trajectory(process, 30, seed);
    let mut psbf = FactoredBelief::uniform(layout.clone());
    let mut bk = psbf.clone();
    let mut pf = ParticleSet::uniform(&process.domains(), 2000, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut snap = Snapshot {
        psbf: Vec::new(),
        bk: Vec::new(),
        pf: Vec::new(),
    };
    for (t, (&a, o)) in traj.actions.iter().zip(&traj.observations).enumerate() {
        let dbn = &process.actions()[a];
        psbf = psbf_step(&ctx, &psbf, dbn, o, &detect_all(dbn)).unwrap().0;
        bk = bk_step(&ctx, &bk, dbn, o).unwrap().0;
        pf = pf_step(&exec, &pf, dbn, o, seed * 1000 + t as u64, ZeroLikelihood::UniformReset).unwrap();
        snap.psbf.push(bits(psbf.factors()));
        snap.bk.push(bits(bk.factors()));
        snap.pf.push(particle_bits(&pf));
    }
    snap
}

fn parallel_determinism() -> Outcome {
    for k in 0..20u64 {
        let pct = [0.0, 20.0, 40.0, 60.0][k as usize % 4];
        let process = bench_process(Preset::M, pct, k).unwrap();
        let one = run_snapshot(&process, k, 1);
        for threads in [2, 4] {
            if run_snapshot(&process, k, threads) != one {
                return Err(format!("process {k}: outputs differ between 1 and {threads} threads"));
            }
        }
    }
    Ok("20 M processes x 30 steps, psbf/bk/pf bit-identical across 1/2/4 threads".into())
}

fn pf_consistency() -> Outcome {
    let exec = RayonExecutor::new(4).unwrap();
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let n = 2 + k as usize % 3;
        let process = synth(Preset::S, n, 2, f64::from(k as u32 % 4 * 20), k);
        let traj = sample_trajectory(&process, 20, k);
        let domains = process.domains();
        let mut exact = JointBelief::uniform(domains.clone(), CAP).unwrap();
        let mut pf = ParticleSet::stratified(&domains, 100_000);
        for (t, (&a, o)) in traj.actions.iter().zip(&traj.observations).enumerate() {
            let dbn = &process.actions()[a];
            exact = exact_step(&exact, dbn, o).unwrap();
            pf = pf_step(&exec, &pf, dbn, o, k * 1000 + t as u64, ZeroLikelihood::Error).unwrap();
        }
        for (i, &d) in domains.iter().enumerate() {
            worst = worst.max(max_abs_diff(&pf.var_marginal(i, d), &exact.marginal(&[i])));
        }
    }
    check(worst <= 0.01, format!("20 processes, N=1e5, 20 steps, max marginal deviation {worst:.4} (tol 0.01)"))
}

fn warehouse_properties() -> Outcome {
    let config = WarehouseConfig::kiva16();
    let exec = RayonExecutor::new(1).unwrap();
    let (mut skip, mut tasks) = (0.0, [0.0, 0.0]);
    let mut time = [Duration::ZERO, Duration::ZERO];
    let (mut same, mut total) = (0usize, 0usize);
    for seed in 0..20u64 {
        let mut traces = Vec::new();
        for (f, filter) in [warehouse::FilterKind::Psbf, warehouse::FilterKind::Bk].into_iter().enumerate() {
            let trace = warehouse::simulate(&config, filter, 100, seed, &exec, &WallClock, FilterConfig::default())
                .map_err(|e| e.to_string())?;
            tasks[f] += trace.summary.tasks_completed as f64 / 20.0;
            time[f] += trace.summary.mean_filter_time / 20;
            if f == 0 {
                skip += trace.summary.mean_skipped_fraction / 20.0;
            }
            traces.push(trace);
        }
        let (a, b) = (&traces[0].summary.auctions, &traces[1].summary.auctions);
        total += a.len().max(b.len());
        same += a
            .iter()
            .zip(b)
            .filter(|(x, y)| x.step == y.step && x.task == y.task && x.winner == y.winner)
            .count();
    }
    let agree = same as f64 / total.max(1) as f64;
    let ok = skip > 0.25 && time[0] < time[1] && (tasks[0] - tasks[1]).abs() <= 1.0 && agree >= 0.9;
    check(
        ok,
        format!(
            "20 seeds x 100 steps: skipped {skip:.3} (>0.25), step time psbf {:.1}us bk {:.1}us, tasks psbf {:.2} bk {:.2} (|diff|<=1), auction agreement {agree:.3} over {total} (>=0.9)",
            time[0].as_secs_f64() * 1e6,
            time[1].as_secs_f64() * 1e6,
            tasks[0],
            tasks[1]
        ),
    )
}

fn specs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn golden_round_trips() -> Outcome {
    let mut names: Vec<_> = std::fs::read_dir(specs_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "spec"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err("no example specs found".into());
    }
    for path in &names {
        let name = path.display();
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let process = specfile::parse(&text).map_err(|e| format!("{name}: {e}"))?;
        if let Some((action, _)) = process.validate().into_iter().find(|(_, r)| !r.is_valid()) {
            return Err(format!("{name}: action {action} fails validation"));
        }
        if specfile::emit(&process).map_err(|e| e.to_string())? != text {
            return Err(format!("{name}: emitted text differs from file"));
        }
        let golden = std::fs::read_to_string(path.with_extension("passivity.txt")).map_err(|e| format!("{name}: {e}"))?;
        if report::passivity(&process, Format::Table) != golden {
            return Err(format!("{name}: passivity report differs from golden file"));
        }
    }
    Ok(format!("{} example specs round-trip and match their passivity reports", names.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("transition exactness", Duration::from_secs(60), transition_exactness),
        ("skip equals full update", Duration::from_secs(60), skip_equals_full_update),
        ("passivity soundness", Duration::from_secs(120), passivity_soundness),
        ("accuracy trend", Duration::from_secs(600), accuracy_trend),
        ("timing trend", Duration::from_secs(600), timing_trend),
        ("parallel determinism", Duration::from_secs(300), parallel_determinism),
        ("particle filter consistency", Duration::from_secs(300), pf_consistency),
        ("warehouse", Duration::from_secs(900), warehouse_properties),
        ("golden round trips", Duration::from_secs(10), golden_round_trips),
    ];
    let mut failed = 0;
    for (k, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= *limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {elapsed:.1?}, limit {limit:?}")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {}: {status} {name} [{elapsed:.1?}] {detail}", k + 1);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
