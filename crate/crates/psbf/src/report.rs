//! Text and CSV renderings of analysis results and per-step records.

use std::io::Write;

use psbf_core::clustering::{check_a1, check_a2};
use psbf_core::passivity::detect_all;
use psbf_core::warehouse::Trace;
use psbf_core::{Clustering, Process, Status};
use serde::Serialize;

use crate::runner::StepRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Csv,
}

#[derive(Debug, Serialize)]
struct PassivityRow<'a> {
    action: &'a str,
    variable: &'a str,
    verdict: &'static str,
    phi: String,
    reachable: bool,
}

pub fn passivity(process: &Process, format: Format) -> String {
    let names = |set: &std::collections::BTreeSet<usize>| -> String {
        set.iter().map(|&j| process.state_vars()[j].name.as_str()).collect::<Vec<_>>().join(";")
    };
    let mut rows = Vec::new();
    for dbn in process.actions() {
        let report = detect_all(dbn);
        for v in &report.verdicts {
            rows.push(PassivityRow {
                action: dbn.name(),
                variable: &process.state_vars()[v.var].name,
                verdict: match v.status {
                    Status::Passive => "passive",
                    Status::Active => "active",
                },
                phi: names(&v.phi),
                reachable: report.is_reachable(v.var),
            });
        }
    }
    match format {
        Format::Csv => to_csv(&rows),
        Format::Table => {
            let aw = rows.iter().map(|r| r.action.len()).chain([6]).max().unwrap_or(6);
            let vw = rows.iter().map(|r| r.variable.len()).chain([8]).max().unwrap_or(8);
            let pw = rows.iter().map(|r| r.phi.len()).chain([3]).max().unwrap_or(3);
            let mut s = format!("{:<aw$}  {:<vw$}  {:<7}  {:<pw$}  reachable\n", "action", "variable", "verdict", "phi");
            for r in &rows {
                let phi = if r.phi.is_empty() { "-" } else { r.phi.as_str() };
                s.push_str(&format!(
                    "{:<aw$}  {:<vw$}  {:<7}  {:<pw$}  {}\n",
                    r.action,
                    r.variable,
                    r.verdict,
                    phi,
                    if r.reachable { "yes" } else { "no" }
                ));
            }
            s
        }
    }
}

#[derive(Debug, Serialize)]
struct ClusterRow {
    cluster: usize,
    variables: String,
}

/// The clustering followed by its A1/A2 status.
pub fn clustering(process: &Process, clustering: &Clustering, format: Format) -> String {
    let rows: Vec<ClusterRow> = clustering
        .clusters()
        .iter()
        .enumerate()
        .map(|(k, c)| ClusterRow {
            cluster: k + 1,
            variables: c.iter().map(|&i| process.state_vars()[i].name.as_str()).collect::<Vec<_>>().join(";"),
        })
        .collect();
    let a1 = check_a1(clustering, process.actions());
    let a2 = check_a2(clustering);
    match format {
        Format::Csv => to_csv(&rows),
        Format::Table => {
            let mut s = String::new();
            for r in &rows {
                s.push_str(&format!("C{}: {}\n", r.cluster, r.variables.replace(';', " ")));
            }
            s.push_str(&format!("A2 (disjoint): {}\n", if a2 { "holds" } else { "violated" }));
            if a1.is_empty() {
                s.push_str("A1 (no intra-slice edges across clusters): holds\n");
            } else {
                s.push_str(&format!("A1 (no intra-slice edges across clusters): violated ({} edges)\n", a1.len()));
                for v in &a1 {
                    s.push_str(&format!(
                        "  {}: {}@t1 -> {}@t1\n",
                        v.action,
                        process.state_vars()[v.parent].name,
                        process.state_vars()[v.var].name
                    ));
                }
            }
            if !a2 {
                s.push_str("warning: overlapping clusters; factor updates use unmarginalized CPTs\n");
            }
            s
        }
    }
}

#[derive(Debug, Serialize)]
struct RunRow<'a> {
    step: usize,
    action: &'a str,
    filter: &'static str,
    transition_us: f64,
    observation_us: f64,
    overhead_us: f64,
    factors_skipped: usize,
    kl_bits: Option<f64>,
}

pub fn write_run_csv<W: Write>(out: W, records: &[StepRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(RunRow {
            step: r.step,
            action: &r.action,
            filter: r.filter.name(),
            transition_us: r.transition_us,
            observation_us: r.observation_us,
            overhead_us: r.overhead_us,
            factors_skipped: r.factors_skipped,
            kl_bits: r.kl_bits,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TraceCsvRow<'a> {
    step: usize,
    joint_action: &'a str,
    tasks_done: usize,
    filter_us: f64,
    skipped_fraction: f64,
}

pub fn write_trace_csv<W: Write>(out: W, trace: &Trace) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &trace.rows {
        w.serialize(TraceCsvRow {
            step: r.step,
            joint_action: &r.joint_action,
            tasks_done: r.tasks_done,
            filter_us: r.filter_time.as_secs_f64() * 1e6,
            skipped_fraction: r.skipped_fraction,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}
