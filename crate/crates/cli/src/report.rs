//! Re-aggregation of a completed run directory from its per-run artifacts,
//! with a double-entry audit: the best metric stored per run must equal the
//! extremum recomputed from the run's CSV trace.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use bae_nn::EvalMetric;

use crate::runner::{aggregate, write_summary, RunRecord, Summary};

#[derive(Debug, Deserialize)]
struct RunJson {
    record: RunRecord,
    metric: String,
    #[serde(default = "one")]
    eligible_from_epoch: usize,
}

fn one() -> usize {
    1
}

fn metric_from_name(name: &str) -> Result<EvalMetric> {
    match name {
        "mse" => Ok(EvalMetric::Mse),
        "accuracy" => Ok(EvalMetric::Accuracy),
        other => bail!("unknown metric {other}"),
    }
}

fn best_from_csv(path: &Path, metric: EvalMetric, eligible_from: usize) -> Result<Option<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut best: Option<f64> = None;
    for row in reader.records() {
        let row = row?;
        let epoch: usize = row
            .get(0)
            .context("missing epoch column")?
            .parse()
            .context("parsing epoch")?;
        if epoch < eligible_from {
            continue;
        }
        let value: f64 = row
            .get(3)
            .context("missing test_metric column")?
            .parse()
            .context("parsing test_metric")?;
        if best.is_none() || metric.better(value, best.unwrap()) {
            best = Some(value);
        }
    }
    Ok(best)
}

/// Rebuilds summary.csv / summary.json / tables.md from the per-run files
/// under `run_dir/runs`. Idempotent; fails if a stored best metric
/// disagrees with its own trace.
pub fn reaggregate(run_dir: &Path) -> Result<Summary> {
    let runs_root = run_dir.join("runs");
    if !runs_root.is_dir() {
        bail!("{} has no runs/ directory", run_dir.display());
    }
    let mut entries: Vec<(String, String, u64, std::path::PathBuf)> = Vec::new();
    for grid in sorted_dirs(&runs_root)? {
        let grid_name = dir_name(&grid);
        for alg in sorted_dirs(&grid)? {
            let alg_name = dir_name(&alg);
            let mut seeds: Vec<u64> = Vec::new();
            for f in fs::read_dir(&alg)? {
                let f = f?.path();
                if f.extension().and_then(|e| e.to_str()) == Some("json") {
                    if let Some(stem) = f.file_stem().and_then(|s| s.to_str()) {
                        seeds.push(stem.parse().context("seed file name")?);
                    }
                }
            }
            seeds.sort_unstable();
            for s in seeds {
                entries.push((grid_name.clone(), alg_name.clone(), s, alg.clone()));
            }
        }
    }
    if entries.is_empty() {
        bail!("no per-run artifacts under {}", runs_root.display());
    }

    let mut per_run = Vec::new();
    let mut metric_name: Option<String> = None;
    for (_grid, _alg, seed, dir) in entries {
        let json_path = dir.join(format!("{seed}.json"));
        let parsed: RunJson = serde_json::from_str(&fs::read_to_string(&json_path)?)
            .with_context(|| format!("parsing {}", json_path.display()))?;
        let metric = metric_from_name(&parsed.metric)?;
        match &metric_name {
            None => metric_name = Some(parsed.metric.clone()),
            Some(m) if *m != parsed.metric => bail!("mixed metrics in run directory"),
            _ => {}
        }
        // Double entry: the recorded best must match the trace extremum.
        if !parsed.record.failed {
            let from_csv = best_from_csv(
                &dir.join(format!("{seed}.csv")),
                metric,
                parsed.eligible_from_epoch,
            )?;
            match (parsed.record.best_metric, from_csv) {
                (Some(a), Some(b)) if (a - b).abs() <= 0.0 => {}
                (a, b) => bail!(
                    "audit mismatch for {}/{seed}: stored {a:?}, trace {b:?}",
                    dir.display()
                ),
            }
        }
        per_run.push(parsed.record);
    }

    let aggregates = aggregate(&per_run);
    let summary = Summary {
        version: 1,
        metric: metric_name.unwrap_or_else(|| "mse".into()),
        per_run,
        aggregates,
    };
    write_summary(run_dir, &summary)?;
    Ok(summary)
}

fn sorted_dirs(path: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut dirs: Vec<std::path::PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn dir_name(p: &Path) -> String {
    p.file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string()
}
