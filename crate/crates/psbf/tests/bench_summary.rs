use proptest::prelude::*;
use psbf::bench::{mean_stddev, read_records, run_bench, summarize, write_records, BenchPlan, BenchmarkRecord};
use psbf::runner::{run_filters, sample_trajectory, FilterKind, RunConfig};
use psbf::pool::{RayonExecutor, WallClock};
use psbf_core::synth::Preset;
use psbf_core::Clustering;

fn record(process: &str, filter: &str, step: usize, kl: Option<f64>, us: f64, skipped: usize) -> BenchmarkRecord {
    BenchmarkRecord {
        process: process.into(),
        preset: "S".into(),
        passivity_pct: 20.0,
        filter: filter.into(),
        threads: 1,
        step,
        kl_bits: kl,
        transition_us: us,
        observation_us: 0.0,
        overhead_us: 0.0,
        factors_skipped: skipped,
        factors_total: 4,
    }
}

fn small_plan() -> BenchPlan {
    BenchPlan {
        presets: vec![Preset::S],
        passivities: vec![0.0, 40.0],
        processes: 3,
        steps: 12,
        seed: 9,
        run: RunConfig {
            timing: false,
            ..RunConfig::default()
        },
        ..BenchPlan::default()
    }
}

#[test]
fn single_record_has_zero_spread() {
    let rows = summarize(&[record("p0", "psbf", 1, Some(0.25), 10.0, 1)]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].runs, 1);
    assert_eq!(rows[0].final_kl_mean, Some(0.25));
    assert_eq!(rows[0].final_kl_stddev, Some(0.0));
    assert_eq!(rows[0].mean_step_us, 10.0);
    assert_eq!(rows[0].mean_skipped_fraction, 0.25);
}

#[test]
fn two_equal_finals_have_zero_spread() {
    let rows = summarize(&[
        record("p0", "bk", 1, Some(0.9), 1.0, 0),
        record("p0", "bk", 2, Some(0.5), 3.0, 0),
        record("p1", "bk", 2, Some(0.5), 5.0, 0),
    ]);
    assert_eq!(rows[0].runs, 2);
    assert_eq!(rows[0].final_kl_mean, Some(0.5));
    assert_eq!(rows[0].final_kl_stddev, Some(0.0));
    assert_eq!(rows[0].mean_step_us, 3.0);
}

#[test]
fn three_processes_hand_computed() {
    let rows = summarize(&[
        record("a", "psbf", 5, Some(1.0), 2.0, 0),
        record("b", "psbf", 5, Some(2.0), 4.0, 2),
        record("c", "psbf", 5, Some(6.0), 6.0, 4),
        record("a", "bk", 5, None, 1.0, 0),
    ]);
    assert_eq!(rows.len(), 2);
    let (bk, psbf) = (&rows[0], &rows[1]);
    assert_eq!(bk.filter, "bk");
    assert_eq!(bk.final_kl_mean, None);
    assert_eq!(psbf.final_kl_mean, Some(3.0));
    let sd = psbf.final_kl_stddev.unwrap();
    assert!((sd - (14.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(psbf.mean_step_us, 4.0);
    assert!((psbf.mean_skipped_fraction - 0.5).abs() < 1e-12);
}

proptest! {
    #[test]
    fn mean_stddev_is_shift_invariant(xs in prop::collection::vec(-1e3f64..1e3, 1..40), c in -1e3f64..1e3) {
        let (m, s) = mean_stddev(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let (m2, s2) = mean_stddev(&shifted);
        prop_assert!((m2 - m - c).abs() < 1e-9);
        prop_assert!((s2 - s).abs() < 1e-6);
        prop_assert!(s >= 0.0);
    }
}

#[test]
fn records_survive_a_csv_round_trip() {
    let records = run_bench(&small_plan()).unwrap();
    let mut buf = Vec::new();
    write_records(&mut buf, &records).unwrap();
    let header = String::from_utf8(buf.clone()).unwrap();
    assert!(header.starts_with(
        "process,preset,passivity_pct,filter,threads,step,kl_bits,transition_us,observation_us,overhead_us,factors_skipped,factors_total\n"
    ));
    assert_eq!(read_records(buf.as_slice()).unwrap(), records);
    assert_eq!(records.len(), 2 * 3 * 12 * 2);
}

#[test]
fn psbf_and_bk_agree_without_passive_variables() {
    let mut plan = small_plan();
    plan.passivities = vec![0.0];
    let records = run_bench(&plan).unwrap();
    for pair in records.chunks(2) {
        assert_eq!(pair[0].filter, "psbf");
        assert_eq!(pair[1].filter, "bk");
        assert_eq!(pair[0].factors_skipped, 0);
        let (a, b) = (pair[0].kl_bits.unwrap(), pair[1].kl_bits.unwrap());
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn kl_is_identical_across_thread_counts_and_jobs() {
    let mut plan = small_plan();
    plan.threads = vec![1, 2, 4];
    plan.filters = vec![FilterKind::Psbf, FilterKind::Bk, FilterKind::Pf];
    plan.run.particles = 200;
    let records = run_bench(&plan).unwrap();
    let kl = |threads: usize| -> Vec<(String, usize, String, u64)> {
        records
            .iter()
            .filter(|r| r.threads == threads)
            .map(|r| (r.process.clone(), r.step, r.filter.clone(), r.kl_bits.unwrap().to_bits()))
            .collect()
    };
    assert_eq!(kl(2), kl(1));
    assert_eq!(kl(4), kl(1));

    plan.jobs = 3;
    assert_eq!(run_bench(&plan).unwrap(), records);
}

#[test]
fn untimed_bench_csv_is_reproducible() {
    let csv = || {
        let mut buf = Vec::new();
        write_records(&mut buf, &run_bench(&small_plan()).unwrap()).unwrap();
        buf
    };
    let first = csv();
    assert_eq!(csv(), first);
    let records = read_records(first.as_slice()).unwrap();
    assert!(records.iter().all(|r| r.total_us() == 0.0));
}

#[test]
fn trajectories_depend_only_on_the_seed() {
    let process = psbf::bench::bench_process(Preset::S, 20.0, 4).unwrap();
    let a = sample_trajectory(&process, 30, 1);
    assert_eq!(sample_trajectory(&process, 30, 1), a);
    assert_ne!(sample_trajectory(&process, 30, 2), a);
    assert_eq!(a.actions.len(), 30);
    assert!(a.states.iter().all(|s| s.iter().zip(process.domains()).all(|(&x, d)| x < d)));
}

#[test]
fn exact_filter_tracks_itself_and_refuses_large_joints() {
    let process = psbf::bench::bench_process(Preset::S, 40.0, 2).unwrap();
    let exec = RayonExecutor::new(1).unwrap();
    let config = RunConfig {
        steps: 10,
        timing: false,
        ..RunConfig::default()
    };
    let single = Clustering::single(process.state_vars().len());
    let records = run_filters(&process, &single, &[FilterKind::Bk, FilterKind::Exact], &config, &exec, &WallClock).unwrap();
    assert_eq!(records.len(), 20);
    for r in &records {
        assert!(r.kl_bits.unwrap().abs() < 1e-9, "{r:?}");
        assert_eq!(r.factors_total, if r.filter == FilterKind::Bk { 1 } else { 0 });
    }
    let tiny = RunConfig { exact_cap: 4, ..config };
    assert!(run_filters(&process, &single, &[FilterKind::Exact], &tiny, &exec, &WallClock).is_err());
    let records = run_filters(&process, &single, &[FilterKind::Psbf], &tiny, &exec, &WallClock).unwrap();
    assert!(records.iter().all(|r| r.kl_bits.is_none()));
}
