use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const COIN: &str = r#"name = "coin"

[[state]]
name = "x"
domain = 2

[[obs]]
name = "y"
domain = 2

[[action]]
name = "flip"
edges = [["x@t1", "y"]]

[[action.cpt]]
child = "x@t1"
parents = []
rows = [[0.5, 0.5]]

[[action.cpt]]
child = "y"
parents = ["x@t1"]
rows = [[1.0, 0.0], [0.0, 1.0]]
"#;

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn psbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psbf")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn spec_file(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn validate_accepts_the_shipped_specs() {
    for name in ["swap", "arm", "synth-s40"] {
        let path = specs().join(format!("{name}.spec"));
        let out = psbf(&["validate", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).lines().all(|l| l.ends_with(": ok")));
    }
}

#[test]
fn passivity_matches_golden_output() {
    for name in ["swap", "arm", "synth-s40"] {
        let spec = specs().join(format!("{name}.spec"));
        let golden = std::fs::read_to_string(specs().join(format!("{name}.passivity.txt"))).unwrap();
        let out = psbf(&["passivity", spec.to_str().unwrap()]);
        assert_eq!(code(&out), 0);
        assert_eq!(stdout(&out), golden, "{name}");
    }
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_row = spec_file(&dir, "bad.spec", &COIN.replace("[[0.5, 0.5]]", "[[0.7, 0.5]]"));
    let out = psbf(&["validate", &bad_row]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("violation"));

    let unknown = spec_file(&dir, "unknown.spec", &COIN.replace("domain = 2\n\n[[obs]]", "domain = 2\nsize = 4\n\n[[obs]]"));
    assert_eq!(code(&psbf(&["passivity", &unknown])), 1);

    let missing = dir.path().join("missing.spec");
    let out = psbf(&["validate", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());

    assert_eq!(code(&psbf(&["run"])), 1);
    assert_eq!(code(&psbf(&["bench", "--presets", "Q"])), 1);
    assert_eq!(code(&psbf(&["--help"])), 0);
}

#[test]
fn impossible_observation_exits_with_two_unless_reset() {
    let dir = tempfile::tempdir().unwrap();
    let coin = spec_file(&dir, "coin.spec", COIN);
    let args = ["run", &coin, "--filter", "pf", "--particles", "1", "--steps", "40", "--format", "csv"];
    let out = psbf(&args);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenera"));

    let mut reset = args.to_vec();
    reset.extend(["--on-zero-likelihood", "uniform-reset"]);
    assert_eq!(code(&psbf(&reset)), 0);

    let factored = psbf(&["run", &coin, "--filter", "psbf,bk", "--steps", "40", "--format", "csv"]);
    assert_eq!(code(&factored), 0);
}

#[test]
fn run_csv_has_the_documented_header_and_one_row_per_filter_step() {
    let arm = specs().join("arm.spec");
    let out = psbf(&[
        "run",
        arm.to_str().unwrap(),
        "--filter",
        "psbf,bk,exact",
        "--steps",
        "7",
        "--format",
        "csv",
        "--clustering",
        "joints",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,action,filter,transition_us,observation_us,overhead_us,factors_skipped,kl_bits"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 21);
    for row in rows.iter().filter(|r| r.split(',').nth(2) == Some("exact")) {
        let kl: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(kl.abs() < 1e-9);
    }
}

#[test]
fn untimed_runs_are_byte_identical_across_threads() {
    let spec = specs().join("synth-s40.spec");
    let run = |threads: &str| {
        let out = psbf(&[
            "run",
            spec.to_str().unwrap(),
            "--filter",
            "psbf,bk,pf",
            "--steps",
            "15",
            "--particles",
            "300",
            "--no-timing",
            "--format",
            "csv",
            "--seed",
            "3",
            "--threads",
            threads,
        ]);
        assert_eq!(code(&out), 0);
        out.stdout
    };
    let one = run("1");
    assert_eq!(run("2"), one);
    assert_eq!(run("4"), one);
}

#[test]
fn gen_is_deterministic_and_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let a = psbf(&["gen", "--preset", "S", "--passivity", "40", "--seed", "11"]);
    let b = psbf(&["gen", "--preset", "S", "--passivity", "40", "--seed", "11"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let path = spec_file(&dir, "g.spec", &stdout(&a));
    assert_eq!(code(&psbf(&["validate", &path])), 0);

    let out_dir = dir.path().join("many");
    let out = psbf(&["gen", "--count", "3", "-o", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 3);
}

#[test]
fn cluster_reports_a1_status_and_saves_named_clusterings() {
    let dir = tempfile::tempdir().unwrap();
    let arm = specs().join("arm.spec");
    let out = psbf(&["cluster", arm.to_str().unwrap(), "--strategy", "singleton"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("A2 (disjoint): holds"));

    let saved = dir.path().join("arm2.spec");
    let out = psbf(&[
        "cluster",
        arm.to_str().unwrap(),
        "--strategy",
        "components",
        "--save-as",
        "auto",
        "-o",
        saved.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let process = psbf::specfile::read(&saved).unwrap();
    assert!(process.clustering("auto").is_some());
}

#[test]
fn warehouse_trace_has_one_row_per_step() {
    let out = psbf(&["warehouse", "--steps", "12", "--format", "csv", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,joint_action,tasks_done,filter_us,skipped_fraction");
    assert_eq!(lines.count(), 12);
}
