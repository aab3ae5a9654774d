//! Result files: one CSV per replication, an aggregate CSV and a JSON
//! sidecar with per-run diagnostics.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use snow_core::routing::tree_height_bound;

use crate::metrics::{write_csv, MetricsRecord, Scope};
use crate::scenario::RunResult;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{0} already exists; pass --force to replace it")]
    Exists(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// Summary of every run sharing `(algorithm, n, k, scope)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub algorithm: String,
    pub n: usize,
    pub k: usize,
    pub scope: Scope,
    pub runs: usize,
    pub messages: usize,
    pub mean_reliability: f64,
    pub min_reliability: f64,
    pub mean_rmr: Option<f64>,
    pub mean_ldt_ms: Option<f64>,
    pub max_ldt_ms: Option<u64>,
    pub max_hops: Option<u32>,
    pub converged_fraction: Option<f64>,
}

fn mean<I: Iterator<Item = f64>>(it: I) -> Option<f64> {
    let (s, c) = it.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

pub fn aggregate(results: &[RunResult]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, usize, usize), Vec<&RunResult>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in results {
        let key = (r.algorithm.name().to_string(), r.n, r.k);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .filter_map(|key| {
            let runs = &groups[&key];
            let recs: Vec<&MetricsRecord> = runs.iter().flat_map(|r| r.records.iter()).collect();
            let first = recs.first()?;
            let reliable: Vec<bool> = recs.iter().filter_map(|r| r.converged).collect();
            Some(AggregateRow {
                scenario: first.scenario.clone(),
                algorithm: key.0.clone(),
                n: key.1,
                k: key.2,
                scope: first.scope,
                runs: runs.len(),
                messages: recs.len(),
                mean_reliability: mean(recs.iter().map(|r| r.reliability)).unwrap_or(1.0),
                min_reliability: recs.iter().map(|r| r.reliability).fold(1.0, f64::min),
                mean_rmr: mean(recs.iter().filter_map(|r| r.rmr)),
                mean_ldt_ms: mean(recs.iter().filter_map(|r| r.ldt_ms.map(|x| x as f64))),
                max_ldt_ms: recs.iter().filter_map(|r| r.ldt_ms).max(),
                max_hops: recs.iter().filter_map(|r| r.max_hops).max(),
                converged_fraction: mean(reliable.iter().map(|&c| if c { 1.0 } else { 0.0 })),
            })
        })
        .collect()
}

/// Fixed-width table of aggregate rows, optionally with the tree height
/// bound of each cell.
pub fn render_table(rows: &[AggregateRow], with_height: bool) -> String {
    let opt = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
    let mut s = format!(
        "{:<13} {:>5} {:>3} {:>5} {:>6} {:>8} {:>8} {:>8} {:>9} {:>5} {:>6}",
        "algorithm", "n", "k", "runs", "msgs", "rel", "min_rel", "rmr", "ldt_ms", "hops", "conv"
    );
    if with_height {
        s.push_str(&format!(" {:>3}", "H"));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{:<13} {:>5} {:>3} {:>5} {:>6} {:>8.4} {:>8.4} {:>8} {:>9} {:>5} {:>6}",
            r.algorithm,
            r.n,
            r.k,
            r.runs,
            r.messages,
            r.mean_reliability,
            r.min_reliability,
            opt(r.mean_rmr, 3),
            opt(r.mean_ldt_ms, 0),
            r.max_hops.map_or("-".to_string(), |h| h.to_string()),
            opt(r.converged_fraction, 2),
        ));
        if with_height {
            s.push_str(&format!(" {:>3}", tree_height_bound(r.n.max(1), r.k)));
        }
        s.push('\n');
    }
    s
}

/// Name of the CSV holding one replication.
pub fn run_file_name(r: &RunResult) -> String {
    format!("{}-{}-n{}-k{}-seed{}.csv", r.scenario, r.algorithm.name(), r.n, r.k, r.seed)
}

#[derive(Serialize)]
struct Meta<'a> {
    scenario: &'a str,
    runs: &'a [RunResult],
}

fn create(path: &Path, force: bool) -> Result<File, OutputError> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    opts.open(path).map_err(|source| {
        if source.kind() == io::ErrorKind::AlreadyExists {
            OutputError::Exists(path.to_path_buf())
        } else {
            OutputError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

/// Writes every file for `results` into `dir` and returns their paths.
/// Nothing is written if any target exists and `force` is off.
pub fn write_all(dir: &Path, scenario: &str, results: &[RunResult], force: bool) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = results.iter().map(|r| dir.join(run_file_name(r))).collect();
    let agg_path = dir.join(format!("{scenario}-aggregate.csv"));
    let meta_path = dir.join(format!("{scenario}-meta.json"));
    paths.push(agg_path.clone());
    paths.push(meta_path.clone());
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(OutputError::Exists(p.clone()));
        }
    }
    for (r, p) in results.iter().zip(&paths) {
        write_csv(create(p, force)?, &r.records)?;
    }
    let mut w = csv::Writer::from_writer(create(&agg_path, force)?);
    for row in aggregate(results) {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: agg_path.clone(),
        source,
    })?;
    let mut f = create(&meta_path, force)?;
    serde_json::to_writer_pretty(&mut f, &Meta { scenario, runs: results })?;
    f.write_all(b"\n").map_err(|source| OutputError::Io { path: meta_path, source })?;
    Ok(paths)
}
