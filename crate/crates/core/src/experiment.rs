//! Parameter sweeps over a base configuration and summary reports of
//! finished run directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{EbmError, Result};
use crate::harness::config::{canonical_key, RunConfig};
use crate::harness::output::{config_path, execute_run, read_final_regrets, TRACE_FILE};
use crate::harness::trace::mean_sd;

pub const MANIFEST_FILE: &str = "manifest.json";

/// One swept key and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl GridAxis {
    /// Parse `key=v1,v2,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| EbmError::invalid(format!("grid axis `{spec}` is not key=v1,v2,...")))?;
        let key = key.trim();
        let values: Vec<String> = values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(String::from)
            .collect();
        if key.is_empty() || values.is_empty() {
            return Err(EbmError::invalid(format!("grid axis `{spec}` has no values")));
        }
        Ok(GridAxis {
            key: key.to_string(),
            values,
        })
    }
}

/// Cartesian product of the axes as override lists; the first axis varies
/// slowest.
pub fn expand_grid(axes: &[GridAxis]) -> Result<Vec<Vec<String>>> {
    if axes.is_empty() {
        return Err(EbmError::invalid("grid is empty"));
    }
    let mut points: Vec<Vec<String>> = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut next = p.clone();
                    next.push(format!("{}={}", axis.key, v));
                    next
                })
            })
            .collect();
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub overrides: Vec<String>,
    /// Run directory relative to the sweep directory.
    pub dir: PathBuf,
    pub status: PointStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub points: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| EbmError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Run every grid point under `out`, up to `jobs` at a time. A failing point
/// is marked in the manifest and the sweep continues.
pub fn run_sweep(base: &RunConfig, axes: &[GridAxis], out: &Path, jobs: usize) -> Result<Manifest> {
    let points = expand_grid(axes)?;
    // reject malformed overrides before any work is done
    let configs = points
        .iter()
        .map(|p| base.with_overrides(p))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out).map_err(|e| EbmError::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EbmError::invalid(format!("thread pool: {e}")))?;
    let entries: Vec<ManifestEntry> = pool.install(|| {
        use rayon::prelude::*;
        configs
            .par_iter()
            .zip(points.par_iter())
            .enumerate()
            .map(|(index, (config, overrides))| {
                let dir = PathBuf::from(format!("point_{index:03}"));
                let result = execute_run(config, &out.join(&dir));
                ManifestEntry {
                    index,
                    overrides: overrides.clone(),
                    dir,
                    status: if result.is_ok() {
                        PointStatus::Ok
                    } else {
                        PointStatus::Failed
                    },
                    error: result.err().map(|e| e.to_string()),
                }
            })
            .collect()
    });
    let manifest = Manifest { points: entries };
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| EbmError::io(&path, e))?;
    Ok(manifest)
}

/// One line of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub point: String,
    pub policy: String,
    pub seeds: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Runs that could not be summarized, with the reason.
    pub problems: Vec<(PathBuf, String)>,
}

fn is_policy_key(spec: &str) -> bool {
    spec.split_once('=')
        .is_some_and(|(k, _)| canonical_key(k.trim()) == "policy.kind")
}

fn summarize_run(dir: &Path, point: String) -> std::result::Result<ReportRow, String> {
    let config = RunConfig::load(&config_path(dir)).map_err(|e| e.to_string())?;
    let finals = read_final_regrets(&dir.join(TRACE_FILE)).map_err(|e| e.to_string())?;
    let values: Vec<f64> = finals.iter().map(|(_, v)| *v).collect();
    let (mean, sd) = mean_sd(&values);
    Ok(ReportRow {
        point,
        policy: config.policy.kind.label().to_string(),
        seeds: values.len(),
        mean,
        sd,
    })
}

/// Summarize run directories and sweep directories into one table.
pub fn build_report(dirs: &[PathBuf]) -> Report {
    let mut report = Report::default();
    let mut runs: Vec<(PathBuf, String)> = Vec::new();
    for dir in dirs {
        if dir.join(MANIFEST_FILE).exists() {
            match Manifest::read(dir) {
                Ok(m) => {
                    for entry in m.points {
                        let point: Vec<&str> = entry
                            .overrides
                            .iter()
                            .filter(|o| !is_policy_key(o))
                            .map(String::as_str)
                            .collect();
                        runs.push((dir.join(&entry.dir), point.join(" ")));
                    }
                }
                Err(e) => report.problems.push((dir.clone(), e.to_string())),
            }
        } else {
            let label = match RunConfig::load(&config_path(dir)) {
                Ok(c) => {
                    let point: Vec<&str> = c
                        .applied_overrides
                        .iter()
                        .filter(|o| !is_policy_key(o))
                        .map(String::as_str)
                        .collect();
                    point.join(" ")
                }
                Err(_) => String::new(),
            };
            runs.push((dir.clone(), label));
        }
    }
    for (dir, point) in runs {
        match summarize_run(&dir, point) {
            Ok(row) => report.rows.push(row),
            Err(e) => report.problems.push((dir, e)),
        }
    }
    report.rows.sort_by(|a, b| {
        a.point
            .cmp(&b.point)
            .then_with(|| a.policy.cmp(&b.policy))
            .then_with(|| a.mean.total_cmp(&b.mean))
    });
    report.problems.sort();
    report
}

fn display_point(point: &str) -> &str {
    if point.is_empty() {
        "-"
    } else {
        point
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,policy,seeds,mean_final_regret,sd_final_regret\n");
        for r in &self.rows {
            writeln!(out, "\"{}\",{},{},{},{}", r.point, r.policy, r.seeds, r.mean, r.sd).unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    display_point(&r.point).to_string(),
                    r.policy.clone(),
                    r.seeds.to_string(),
                    format!("{:.3} ± {:.3}", r.mean, r.sd),
                ]
            })
            .collect();
        let header = ["point", "policy", "seeds", "final regret"];
        let mut widths = header.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |row: [&str; 4]| {
            let padded: Vec<String> = row
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        };
        line(header);
        for row in &cells {
            line([&row[0], &row[1], &row[2], &row[3]]);
        }
        if !self.problems.is_empty() {
            out.push_str("\nproblems:\n");
            for (dir, msg) in &self.problems {
                writeln!(out, "  {}: {}", dir.display(), msg).unwrap();
            }
        }
        out
    }
}
