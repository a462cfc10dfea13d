use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::episode::run_replications;
use super::trace::{AggregateResult, CurveStats, RegretTrace};
use crate::error::{EbmError, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const ERROR_FILE: &str = "error.txt";

/// All per-seed traces as one CSV, seeds in the order given.
pub fn trace_csv(traces: &[RegretTrace]) -> String {
    let n_instances = traces.first().map_or(0, |t| t.n_instances);
    let mut out = String::from("seed,t,instance,arm,optimal_arm,regret,cum_regret");
    for j in 0..n_instances {
        write!(out, ",cum_regret_instance_{j}").unwrap();
    }
    out.push('\n');
    for tr in traces {
        for ((s, cum), inst) in tr.steps.iter().zip(&tr.cumulative).zip(&tr.per_instance_cumulative) {
            write!(
                out,
                "{},{},{},{},{},{},{}",
                tr.seed, s.t, s.instance, s.arm, s.optimal_arm, s.regret, cum
            )
            .unwrap();
            for v in inst {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

fn push_stats(out: &mut String, stats: &CurveStats, t: usize) {
    write!(
        out,
        ",{},{},{},{},{}",
        stats.mean[t], stats.sd[t], stats.q10[t], stats.q50[t], stats.q90[t]
    )
    .unwrap();
}

/// Pointwise summary curves, one row per step.
pub fn aggregate_csv(agg: &AggregateResult) -> String {
    let mut out = String::from("t,mean,sd,q10,q50,q90");
    for j in 0..agg.per_instance.len() {
        for stat in ["mean", "sd", "q10", "q50", "q90"] {
            write!(out, ",{stat}_instance_{j}").unwrap();
        }
    }
    out.push('\n');
    for t in 0..agg.total.mean.len() {
        write!(out, "{}", t + 1).unwrap();
        push_stats(&mut out, &agg.total, t);
        for inst in &agg.per_instance {
            push_stats(&mut out, inst, t);
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| EbmError::io(path, e))
}

/// Run every seed of `config` and store the config echo, traces and
/// aggregate under `dir`. On failure the echo and an `error.txt` are left
/// behind and the error is returned.
pub fn execute_run(config: &RunConfig, dir: &Path) -> Result<AggregateResult> {
    fs::create_dir_all(dir).map_err(|e| EbmError::io(dir, e))?;
    let mut echo = config.clone();
    echo.output_dir = Some(dir.to_path_buf());
    write_file(&dir.join(CONFIG_FILE), &echo.to_json()?)?;
    let stale = dir.join(ERROR_FILE);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| EbmError::io(&stale, e))?;
    }
    match run_replications(config) {
        Ok(agg) => {
            write_file(&dir.join(TRACE_FILE), &trace_csv(&agg.traces))?;
            write_file(&dir.join(AGGREGATE_FILE), &aggregate_csv(&agg))?;
            Ok(agg)
        }
        Err(e) => {
            write_file(&dir.join(ERROR_FILE), &format!("{e}\n"))?;
            Err(e)
        }
    }
}

/// Final cumulative regret of each seed in a trace CSV, in file order.
pub fn read_final_regrets(path: &Path) -> Result<Vec<(u64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| EbmError::io(path, e))?;
    let corrupt = |line: usize, msg: &str| EbmError::document(TRACE_FILE, format!("line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| corrupt(1, "empty file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let seed_col = columns.iter().position(|c| *c == "seed");
    let cum_col = columns.iter().position(|c| *c == "cum_regret");
    let (Some(seed_col), Some(cum_col)) = (seed_col, cum_col) else {
        return Err(corrupt(1, "missing seed or cum_regret column"));
    };
    let mut finals: Vec<(u64, f64)> = Vec::new();
    let mut previous: Option<u64> = None;
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(corrupt(i + 1, "wrong number of fields"));
        }
        let seed: u64 = fields[seed_col].parse().map_err(|_| corrupt(i + 1, "bad seed"))?;
        let cum: f64 = fields[cum_col].parse().map_err(|_| corrupt(i + 1, "bad cum_regret"))?;
        match (previous, finals.last_mut()) {
            (Some(p), Some(last)) if p == seed => last.1 = cum,
            _ => finals.push((seed, cum)),
        }
        previous = Some(seed);
    }
    if finals.is_empty() {
        return Err(corrupt(2, "no rows"));
    }
    Ok(finals)
}

/// Path of the config echo inside a run directory.
pub fn config_path(dir: &Path) -> PathBuf {
    dir.join(CONFIG_FILE)
}
