use std::collections::BTreeMap;
use std::io::Write;

use psbf_core::synth::{generate, Preset, SynthParams};
use psbf_core::Process;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pool::{RayonExecutor, WallClock};
use crate::runner::{resolve_clustering, run_filters, FilterKind, RunConfig, StepRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PfMatch {
    Fixed(usize),
    /// Largest particle count whose mean step time stays within PSBF's.
    Speed,
    /// Smallest particle count whose mean KL reaches PSBF's.
    Accuracy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchPlan {
    pub presets: Vec<Preset>,
    pub passivities: Vec<f64>,
    pub filters: Vec<FilterKind>,
    /// Number of generated processes per (preset, passivity) cell.
    pub processes: usize,
    pub seed: u64,
    pub threads: Vec<usize>,
    pub steps: usize,
    pub pf_match: PfMatch,
    pub max_particles: usize,
    pub exact_cap: usize,
    pub run: RunConfig,
    /// Each run is repeated this many times and every timing field keeps
    /// its minimum over the repeats.
    pub repeats: usize,
    /// Grid cells evaluated concurrently.
    pub jobs: usize,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            presets: vec![Preset::S, Preset::M],
            passivities: vec![0.0, 20.0, 40.0, 60.0],
            filters: vec![FilterKind::Psbf, FilterKind::Bk],
            processes: 50,
            seed: 0,
            threads: vec![1],
            steps: 100,
            pf_match: PfMatch::Fixed(1000),
            max_particles: 1 << 16,
            exact_cap: 1 << 12,
            run: RunConfig::default(),
            repeats: 1,
            jobs: 1,
        }
    }
}

impl BenchPlan {
    pub fn check(&self) -> Result<(), String> {
        if self.presets.is_empty() || self.passivities.is_empty() || self.filters.is_empty() {
            return Err("bench plan grid is empty".into());
        }
        if self.processes == 0 || self.threads.is_empty() || self.threads.contains(&0) {
            return Err("bench plan needs at least one process and positive thread counts".into());
        }
        Ok(())
    }
}

/// One filter step on one benchmark process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub process: String,
    pub preset: String,
    pub passivity_pct: f64,
    pub filter: String,
    pub threads: usize,
    pub step: usize,
    pub kl_bits: Option<f64>,
    pub transition_us: f64,
    pub observation_us: f64,
    pub overhead_us: f64,
    pub factors_skipped: usize,
    pub factors_total: usize,
}

impl BenchmarkRecord {
    pub fn total_us(&self) -> f64 {
        self.transition_us + self.observation_us + self.overhead_us
    }
}

pub fn bench_process(preset: Preset, passivity: f64, seed: u64) -> psbf_core::Result<Process> {
    generate(&SynthParams::preset(preset, passivity, seed))
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn run_one(
    process: &Process,
    filters: &[FilterKind],
    config: &RunConfig,
    threads: usize,
) -> psbf_core::Result<Vec<StepRecord>> {
    run_repeated(process, filters, config, threads, 1)
}

/// Runs the same seeded trajectory `repeats` times and keeps the smallest
/// timing of each step; all other fields are identical across repeats.
pub fn run_repeated(
    process: &Process,
    filters: &[FilterKind],
    config: &RunConfig,
    threads: usize,
    repeats: usize,
) -> psbf_core::Result<Vec<StepRecord>> {
    let clustering = resolve_clustering(process, "components").map_err(psbf_core::Error::InvalidParameter)?;
    let exec = RayonExecutor::new(threads).map_err(|e| psbf_core::Error::InvalidParameter(e.to_string()))?;
    let mut best = run_filters(process, &clustering, filters, config, &exec, &WallClock)?;
    for _ in 1..repeats {
        let again = run_filters(process, &clustering, filters, config, &exec, &WallClock)?;
        for (b, a) in best.iter_mut().zip(again) {
            b.transition_us = b.transition_us.min(a.transition_us);
            b.observation_us = b.observation_us.min(a.observation_us);
            b.overhead_us = b.overhead_us.min(a.overhead_us);
        }
    }
    Ok(best)
}

/// Picks the particle count for one grid cell from a pilot run on `pilot`.
pub fn calibrate_particles(pilot: &Process, plan: &BenchPlan, config: &RunConfig) -> psbf_core::Result<usize> {
    let mode = match plan.pf_match {
        PfMatch::Fixed(n) => return Ok(n),
        PfMatch::Accuracy if config.exact_cap < pilot_size(pilot) => PfMatch::Speed,
        m => m,
    };
    let reference = run_one(pilot, &[FilterKind::Psbf], config, 1)?;
    let target_time = mean(reference.iter().map(StepRecord::total_us));
    let target_kl = mean(reference.iter().filter_map(|r| r.kl_bits));
    let good = |n: usize| -> psbf_core::Result<bool> {
        let cfg = RunConfig { particles: n, ..config.clone() };
        let recs = run_one(pilot, &[FilterKind::Pf], &cfg, 1)?;
        Ok(match mode {
            PfMatch::Accuracy => mean(recs.iter().filter_map(|r| r.kl_bits)) <= target_kl,
            _ => mean(recs.iter().map(StepRecord::total_us)) <= target_time,
        })
    };
    let (mut lo, mut hi) = (1usize, plan.max_particles.max(1));
    match mode {
        PfMatch::Accuracy => {
            // smallest n with good(n)
            if !good(hi)? {
                return Ok(hi);
            }
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if good(mid)? {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            Ok(lo)
        }
        _ => {
            // largest n with good(n)
            while lo < hi {
                let mid = lo + (hi - lo).div_ceil(2);
                if good(mid)? {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            Ok(lo)
        }
    }
}

fn pilot_size(p: &Process) -> usize {
    p.domains().iter().fold(1usize, |acc, &d| acc.saturating_mul(d))
}

/// Runs every cell of the plan. Records are ordered by preset, passivity,
/// process, thread count, step and filter regardless of `jobs`.
pub fn run_bench(plan: &BenchPlan) -> psbf_core::Result<Vec<BenchmarkRecord>> {
    plan.check().map_err(psbf_core::Error::InvalidParameter)?;
    let config = RunConfig {
        steps: plan.steps,
        exact_cap: plan.exact_cap,
        ..plan.run.clone()
    };
    let cells: Vec<(Preset, f64)> = plan
        .presets
        .iter()
        .flat_map(|&p| plan.passivities.iter().map(move |&pct| (p, pct)))
        .collect();
    let particles: Vec<usize> = if plan.filters.contains(&FilterKind::Pf) {
        cells
            .iter()
            .map(|&(preset, pct)| {
                let pilot = bench_process(preset, pct, plan.seed)?;
                calibrate_particles(&pilot, plan, &RunConfig { seed: plan.seed, ..config.clone() })
            })
            .collect::<psbf_core::Result<_>>()?
    } else {
        vec![config.particles; cells.len()]
    };

    // Process-major order.
    let ncells = cells.len();
    let jobs: Vec<(usize, usize)> = (0..plan.processes).flat_map(|k| (0..ncells).map(move |c| (c, k))).collect();
    let work = |&(c, k): &(usize, usize)| -> psbf_core::Result<Vec<BenchmarkRecord>> {
        let (preset, pct) = cells[c];
        let seed = plan.seed.wrapping_add(k as u64);
        let process = bench_process(preset, pct, seed)?;
        let cfg = RunConfig {
            seed,
            particles: particles[c],
            ..config.clone()
        };
        let mut out = Vec::new();
        for &threads in &plan.threads {
            for r in run_repeated(&process, &plan.filters, &cfg, threads, plan.repeats.max(1))? {
                out.push(BenchmarkRecord {
                    process: process.name().to_owned(),
                    preset: preset.name().to_owned(),
                    passivity_pct: pct,
                    filter: r.filter.name().to_owned(),
                    threads,
                    step: r.step,
                    kl_bits: r.kl_bits,
                    transition_us: r.transition_us,
                    observation_us: r.observation_us,
                    overhead_us: r.overhead_us,
                    factors_skipped: r.factors_skipped,
                    factors_total: r.factors_total,
                });
            }
        }
        Ok(out)
    };
    let parts: Vec<psbf_core::Result<Vec<BenchmarkRecord>>> = if plan.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()
            .map_err(|e| psbf_core::Error::InvalidParameter(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(work).collect())
    } else {
        jobs.iter().map(work).collect()
    };
    let mut ordered: Vec<((usize, usize), Vec<BenchmarkRecord>)> = Vec::with_capacity(parts.len());
    for (job, p) in jobs.into_iter().zip(parts) {
        ordered.push((job, p?));
    }
    ordered.sort_by_key(|&(job, _)| job);
    Ok(ordered.into_iter().flat_map(|(_, r)| r).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub preset: String,
    pub passivity_pct: f64,
    pub filter: String,
    pub threads: usize,
    pub runs: usize,
    pub final_kl_mean: Option<f64>,
    pub final_kl_stddev: Option<f64>,
    pub mean_step_us: f64,
    pub mean_skipped_fraction: f64,
}

/// Population mean and standard deviation.
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs.iter().copied());
    let var = mean(xs.iter().map(|x| (x - m) * (x - m)));
    (m, var.sqrt())
}

type Key = (String, u64, String, usize);

/// Aggregates records per (preset, passivity, filter, threads). Final-step KL
/// is taken per process at its largest step.
pub fn summarize(records: &[BenchmarkRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<Key, Vec<&BenchmarkRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.preset.clone(), r.passivity_pct.to_bits(), r.filter.clone(), r.threads);
        groups.entry(key).or_default().push(r);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((preset, pct, filter, threads), recs)| {
            let mut last: BTreeMap<&str, &BenchmarkRecord> = BTreeMap::new();
            for r in &recs {
                let slot = last.entry(r.process.as_str()).or_insert(r);
                if r.step > slot.step {
                    *slot = r;
                }
            }
            let finals: Vec<f64> = last.values().filter_map(|r| r.kl_bits).collect();
            let (kl_mean, kl_sd) = if finals.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_stddev(&finals);
                (Some(m), Some(s))
            };
            let skipped = mean(recs.iter().map(|r| {
                if r.factors_total == 0 {
                    0.0
                } else {
                    r.factors_skipped as f64 / r.factors_total as f64
                }
            }));
            SummaryRow {
                preset,
                passivity_pct: f64::from_bits(pct),
                filter,
                threads,
                runs: last.len(),
                final_kl_mean: kl_mean,
                final_kl_stddev: kl_sd,
                mean_step_us: mean(recs.iter().map(|r| r.total_us())),
                mean_skipped_fraction: skipped,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.preset.as_str(), a.passivity_pct, a.filter.as_str(), a.threads)
            .partial_cmp(&(b.preset.as_str(), b.passivity_pct, b.filter.as_str(), b.threads))
            .unwrap()
    });
    rows
}

pub fn write_records<W: Write>(out: W, records: &[BenchmarkRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(input: R) -> csv::Result<Vec<BenchmarkRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<6} {:>6} {:<6} {:>7} {:>5} {:>10} {:>10} {:>12} {:>8}\n",
        "preset", "pass%", "filter", "threads", "runs", "kl_mean", "kl_sd", "step_us", "skipped"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<6} {:>6} {:<6} {:>7} {:>5} {:>10} {:>10} {:>12.2} {:>8.3}\n",
            r.preset,
            r.passivity_pct,
            r.filter,
            r.threads,
            r.runs,
            opt(r.final_kl_mean),
            opt(r.final_kl_stddev),
            r.mean_step_us,
            r.mean_skipped_fraction
        ));
    }
    s
}
