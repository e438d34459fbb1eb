use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use psbf::bench::{self, BenchPlan, PfMatch};
use psbf::pool::{RayonExecutor, WallClock};
use psbf::report::{self, Format};
use psbf::runner::{self, FilterKind, RunConfig};
use psbf::specfile::{self, FormatError};
use psbf_core::filter::{FilterConfig, ZeroLikelihood};
use psbf_core::synth::{generate, Preset, SynthParams};
use psbf_core::warehouse::{self, ControlMode, WarehouseConfig};

/// Passivity-based selective belief filtering for dynamic Bayesian networks.
#[derive(Parser)]
#[command(name = "psbf", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the filter step.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long, global = true, value_enum, default_value_t = OnZero::Error)]
    on_zero_likelihood: OnZero,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnZero {
    Error,
    UniformReset,
}

impl Global {
    fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            on_zero_likelihood: match self.on_zero_likelihood {
                OnZero::Error => ZeroLikelihood::Error,
                OnZero::UniformReset => ZeroLikelihood::UniformReset,
            },
            ..FilterConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check every action DBN of a process file.
    Validate { file: PathBuf },
    /// Passivity verdict, witness set and reachability per action and variable.
    Passivity { file: PathBuf },
    /// Print a clustering and its A1/A2 status.
    Cluster {
        file: PathBuf,
        /// A clustering stored in the file, or singleton, components, max:L.
        #[arg(long, default_value = "components")]
        strategy: String,
        /// Store the clustering in the process under this name and write it to `--output`.
        #[arg(long, requires = "output")]
        save_as: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate synthetic processes.
    Gen(GenArgs),
    /// Run filters on a process and emit per-step records.
    Run(RunArgs),
    /// Run the benchmark grid over generated processes.
    Bench(BenchArgs),
    /// Simulate the multi-robot warehouse.
    Warehouse(WarehouseArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "S", value_parser = parse_preset)]
    preset: Preset,
    #[arg(long, default_value_t = 0.0)]
    passivity: f64,
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    max_parents: Option<usize>,
    #[arg(long)]
    determinism: Option<f64>,
    #[arg(long)]
    intra_edge_prob: Option<f64>,
    /// Output file; with `--count` above 1, a directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Number of processes, seeded consecutively from `--seed`.
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    /// Comma-separated filters, run side by side on one trajectory.
    #[arg(long, value_delimiter = ',', default_value = "psbf")]
    filter: Vec<FilterKind>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value = "components")]
    clustering: String,
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    /// Largest joint state space for the exact oracle.
    #[arg(long, default_value_t = 1 << 12)]
    exact_cap: usize,
    /// Report all timings as zero.
    #[arg(long)]
    no_timing: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "S,M", value_parser = parse_preset)]
    presets: Vec<Preset>,
    #[arg(long, value_delimiter = ',', default_value = "0,20,40,60")]
    passivity: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "psbf,bk")]
    filters: Vec<FilterKind>,
    #[arg(long, default_value_t = 50)]
    processes: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Thread counts to compare; defaults to `--threads`.
    #[arg(long, value_delimiter = ',')]
    thread_counts: Vec<usize>,
    /// speed, accuracy, or a fixed particle count.
    #[arg(long, default_value = "1000", value_parser = parse_pf_match)]
    pf_match: PfMatch,
    #[arg(long, default_value_t = 1 << 16)]
    max_particles: usize,
    #[arg(long, default_value_t = 1 << 12)]
    exact_cap: usize,
    /// Repeat each run and keep the fastest time per step.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Grid cells evaluated concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    no_timing: bool,
    /// Per-step records CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WarehouseArgs {
    #[arg(long, default_value = "kiva16")]
    preset: String,
    #[arg(long, default_value = "psbf", value_parser = parse_wh_filter)]
    filter: warehouse::FilterKind,
    #[arg(long, value_enum, default_value_t = Mode::Centralised)]
    mode: Mode,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Make every action and sensor deterministic.
    #[arg(long)]
    noiseless: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Centralised,
    Decentralised,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    Preset::parse(s).ok_or_else(|| format!("unknown preset `{s}` (expected S, M, L or XL)"))
}

fn parse_pf_match(s: &str) -> Result<PfMatch, String> {
    match s {
        "speed" => Ok(PfMatch::Speed),
        "accuracy" => Ok(PfMatch::Accuracy),
        n => n
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(PfMatch::Fixed)
            .ok_or_else(|| format!("expected speed, accuracy or a positive particle count, got `{s}`")),
    }
}

fn parse_wh_filter(s: &str) -> Result<warehouse::FilterKind, String> {
    match s {
        "psbf" => Ok(warehouse::FilterKind::Psbf),
        "bk" => Ok(warehouse::FilterKind::Bk),
        _ => Err(format!("unknown warehouse filter `{s}` (expected psbf or bk)")),
    }
}

/// Set when a run hits a degenerate model (zero-mass transition or an
/// impossible observation).
#[derive(Debug)]
struct Degenerate(psbf_core::Error);

impl std::fmt::Display for Degenerate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "model degeneracy: {}", self.0)
    }
}

impl std::error::Error for Degenerate {}

fn core_err(e: psbf_core::Error) -> anyhow::Error {
    match e {
        psbf_core::Error::DegenerateTransition { .. } | psbf_core::Error::ImpossibleObservation { .. } => {
            Degenerate(e).into()
        }
        other => other.into(),
    }
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(path: &Path) -> anyhow::Result<psbf_core::Process> {
    specfile::read(path).map_err(|e| match e {
        FormatError::Io { .. } => anyhow::Error::new(e),
        other => anyhow::Error::new(Invalid(format!("{}: {other}", path.display()))),
    })
}

/// A process file that does not parse or validate.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn validate(file: &Path) -> anyhow::Result<()> {
    let process = load(file)?;
    let mut bad = 0;
    for (action, report) in process.validate() {
        if report.is_valid() {
            println!("{action}: ok");
        } else {
            bad += 1;
            println!("{action}: {} violation(s)", report.violations.len());
            for v in &report.violations {
                println!("  {v}");
            }
        }
    }
    if bad > 0 {
        return Err(Invalid(format!("{bad} action(s) failed validation")).into());
    }
    Ok(())
}

fn require_valid(process: &psbf_core::Process) -> anyhow::Result<()> {
    for (action, report) in process.validate() {
        if let Some(v) = report.violations.first() {
            return Err(Invalid(format!("action `{action}` is invalid: {v}")).into());
        }
    }
    Ok(())
}

fn gen(g: &Global, args: &GenArgs) -> anyhow::Result<()> {
    let params = |seed: u64| {
        let mut p = SynthParams::preset(args.preset, args.passivity, seed);
        if let Some(a) = args.actions {
            p.actions = a;
        }
        if let Some(m) = args.max_parents {
            p.max_parents = m;
        }
        if let Some(d) = args.determinism {
            p.determinism = d;
        }
        if let Some(q) = args.intra_edge_prob {
            p.intra_edge_prob = q;
        }
        p
    };
    if args.count == 1 {
        let process = generate(&params(g.seed)).map_err(core_err)?;
        let text = specfile::emit(&process)?;
        output(args.output.as_deref())?.write_all(text.as_bytes())?;
        return Ok(());
    }
    let Some(dir) = &args.output else {
        bail!("--count above 1 needs --output DIR");
    };
    std::fs::create_dir_all(dir)?;
    for k in 0..args.count as u64 {
        let process = generate(&params(g.seed + k)).map_err(core_err)?;
        specfile::write(&dir.join(format!("{}.spec", process.name())), &process)?;
    }
    Ok(())
}

fn run(g: &Global, args: &RunArgs) -> anyhow::Result<()> {
    let process = load(&args.file)?;
    require_valid(&process)?;
    let clustering = runner::resolve_clustering(&process, &args.clustering).map_err(anyhow::Error::msg)?;
    let config = RunConfig {
        steps: args.steps,
        seed: g.seed,
        particles: args.particles,
        exact_cap: args.exact_cap,
        filter: g.filter_config(),
        timing: !args.no_timing,
    };
    let exec = RayonExecutor::new(g.threads)?;
    let records = runner::run_filters(&process, &clustering, &args.filter, &config, &exec, &WallClock).map_err(core_err)?;
    match (g.format, &args.output) {
        (Format::Table, None) => {
            println!(
                "{:>5} {:<12} {:<6} {:>12} {:>12} {:>12} {:>8} {:>10}",
                "step", "action", "filter", "trans_us", "obs_us", "over_us", "skipped", "kl_bits"
            );
            for r in &records {
                println!(
                    "{:>5} {:<12} {:<6} {:>12.2} {:>12.2} {:>12.2} {:>8} {:>10}",
                    r.step,
                    r.action,
                    r.filter,
                    r.transition_us,
                    r.observation_us,
                    r.overhead_us,
                    r.factors_skipped,
                    r.kl_bits.map_or_else(|| "-".into(), |k| format!("{k:.5}"))
                );
            }
        }
        _ => report::write_run_csv(output(args.output.as_deref())?, &records)?,
    }
    Ok(())
}

fn bench_cmd(g: &Global, args: &BenchArgs) -> anyhow::Result<()> {
    let plan = BenchPlan {
        presets: args.presets.clone(),
        passivities: args.passivity.clone(),
        filters: args.filters.clone(),
        processes: args.processes,
        seed: g.seed,
        threads: if args.thread_counts.is_empty() {
            vec![g.threads]
        } else {
            args.thread_counts.clone()
        },
        steps: args.steps,
        pf_match: args.pf_match,
        max_particles: args.max_particles,
        exact_cap: args.exact_cap,
        run: RunConfig {
            filter: g.filter_config(),
            timing: !args.no_timing,
            ..RunConfig::default()
        },
        repeats: args.repeats,
        jobs: args.jobs,
    };
    let records = bench::run_bench(&plan).map_err(core_err)?;
    if let Some(path) = &args.output {
        bench::write_records(output(Some(path))?, &records)?;
    }
    let summary = bench::summarize(&records);
    match g.format {
        Format::Table => print!("{}", bench::summary_table(&summary)),
        Format::Csv => bench::write_summary_csv(io::stdout().lock(), &summary)?,
    }
    Ok(())
}

fn warehouse_cmd(g: &Global, args: &WarehouseArgs) -> anyhow::Result<()> {
    let mut config = match args.preset.as_str() {
        "kiva16" => WarehouseConfig::kiva16(),
        other => bail!("unknown warehouse preset `{other}` (expected kiva16)"),
    };
    if args.noiseless {
        config = config.noiseless();
    }
    config.mode = match args.mode {
        Mode::Centralised => ControlMode::Centralised,
        Mode::Decentralised => ControlMode::Decentralised,
    };
    let exec = RayonExecutor::new(g.threads)?;
    let trace = warehouse::simulate(&config, args.filter, args.steps, g.seed, &exec, &WallClock, g.filter_config())
        .map_err(core_err)?;
    if args.output.is_some() || g.format == Format::Csv {
        report::write_trace_csv(output(args.output.as_deref())?, &trace)?;
    }
    if args.output.is_some() || g.format == Format::Table {
        let s = &trace.summary;
        eprintln!(
            "tasks completed: {}\nmean filter time: {:.1} us\nmean skipped fraction: {:.3}\nauctions: {}",
            s.tasks_completed,
            s.mean_filter_time.as_secs_f64() * 1e6,
            s.mean_skipped_fraction,
            s.auctions.len()
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Validate { file } => validate(file),
        Command::Passivity { file } => {
            let process = load(file)?;
            require_valid(&process)?;
            print!("{}", report::passivity(&process, g.format));
            Ok(())
        }
        Command::Cluster {
            file,
            strategy,
            save_as,
            output,
        } => {
            let mut process = load(file)?;
            require_valid(&process)?;
            let clustering = runner::resolve_clustering(&process, strategy).map_err(anyhow::Error::msg)?;
            print!("{}", report::clustering(&process, &clustering, g.format));
            if let (Some(name), Some(out)) = (save_as, output) {
                process.set_clustering(name.clone(), clustering);
                specfile::write(out, &process)?;
            }
            Ok(())
        }
        Command::Gen(args) => gen(g, args),
        Command::Run(args) => run(g, args),
        Command::Bench(args) => bench_cmd(g, args),
        Command::Warehouse(args) => warehouse_cmd(g, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Degenerate>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
