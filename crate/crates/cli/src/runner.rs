//! Grid expansion and execution: one training run per (grid point,
//! algorithm, seed), per-run CSV/JSON artifacts, and deterministic
//! aggregation regardless of the worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use bae_core::{Dataset, Rng, Stream};
use bae_nn::data::{
    add_noise, generate_simulated, load_idx, split, stratified_subset, NoiseSpec, SimulatedSpec,
};
use bae_nn::train::{image_spec, plain_image_spec, plain_spec, regression_spec};
use bae_nn::{train, Algorithm, EvalMetric, MetricTrace, NetworkSpec, TrainingPlan};

use crate::config::{DatasetConfig, ExperimentConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub grid: String,
    pub algorithm: String,
    pub seed: u64,
    pub best_metric: Option<f64>,
    pub best_epoch: usize,
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AggregateRow {
    pub grid: String,
    pub algorithm: String,
    pub runs: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub version: u32,
    pub metric: String,
    pub per_run: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
}

struct Job {
    grid: String,
    algorithm: Algorithm,
    algorithm_label: String,
    bottleneck: Option<usize>,
    seed: u64,
    data: JobData,
}

enum JobData {
    Simulated {
        d: usize,
        nu_star: usize,
        n: usize,
        sigma: f64,
    },
    Idx {
        base_train: Arc<Dataset>,
        base_test: Arc<Dataset>,
        train_subset: usize,
        test_subset: usize,
        noise: f64,
        clip_to_unit: bool,
    },
}

fn algorithm_label(alg: Algorithm, bottleneck: Option<usize>) -> String {
    match bottleneck {
        Some(b) => format!("{}_b{}", alg.label(), b),
        None => alg.label().to_string(),
    }
}

fn resolve_path(p: &Path, data_dir: Option<&Path>) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match data_dir {
        Some(dir) => dir.join(p),
        None => p.to_path_buf(),
    }
}

fn expand_jobs(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    data_dir: Option<&Path>,
) -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    match &cfg.dataset {
        DatasetConfig::Simulated { d, nu_star, n, sigma } => {
            for &dv in d {
                for &nsv in nu_star {
                    for &nv in n {
                        for &sv in sigma {
                            let grid = format!("d{dv}_nu{nsv}_n{nv}_sig{sv:.2}");
                            for &alg in &cfg.algorithms {
                                let bns: Vec<Option<usize>> = if alg == Algorithm::PlainNn {
                                    vec![None]
                                } else {
                                    cfg.bottleneck.iter().map(|&b| Some(b)).collect()
                                };
                                for bn in bns {
                                    for &seed in seeds {
                                        jobs.push(Job {
                                            grid: grid.clone(),
                                            algorithm: alg,
                                            algorithm_label: algorithm_label(alg, bn),
                                            bottleneck: bn,
                                            seed,
                                            data: JobData::Simulated {
                                                d: dv,
                                                nu_star: nsv,
                                                n: nv,
                                                sigma: sv,
                                            },
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_subset,
            test_subset,
            noise,
            clip_to_unit,
        } => {
            let base_train = Arc::new(
                load_idx(
                    &resolve_path(train_images, data_dir),
                    &resolve_path(train_labels, data_dir),
                )
                .context("loading train IDX files")?,
            );
            let base_test = Arc::new(
                load_idx(
                    &resolve_path(test_images, data_dir),
                    &resolve_path(test_labels, data_dir),
                )
                .context("loading test IDX files")?,
            );
            for &nf in noise {
                let grid = format!("noise{nf:.2}");
                for &alg in &cfg.algorithms {
                    let bns: Vec<Option<usize>> = if alg == Algorithm::PlainNn {
                        vec![None]
                    } else {
                        cfg.bottleneck.iter().map(|&b| Some(b)).collect()
                    };
                    for bn in bns {
                        for &seed in seeds {
                            jobs.push(Job {
                                grid: grid.clone(),
                                algorithm: alg,
                                algorithm_label: algorithm_label(alg, bn),
                                bottleneck: bn,
                                seed,
                                data: JobData::Idx {
                                    base_train: base_train.clone(),
                                    base_test: base_test.clone(),
                                    train_subset: *train_subset,
                                    test_subset: *test_subset,
                                    noise: nf,
                                    clip_to_unit: *clip_to_unit,
                                },
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(jobs)
}

fn job_datasets(job: &Job, cfg: &ExperimentConfig) -> Result<(Dataset, Dataset, NetworkSpec)> {
    match &job.data {
        JobData::Simulated { d, nu_star, n, sigma } => {
            let ds = generate_simulated(&SimulatedSpec {
                d: *d,
                nu_star: *nu_star,
                n: *n,
                sigma: *sigma,
                seed: job.seed,
            })?;
            let mut rng = Rng::with_stream(job.seed, Stream::Split);
            let (train_d, test_d) = split(&ds, cfg.train_fraction, &mut rng)?;
            let spec = match job.bottleneck {
                Some(b) => regression_spec(*d, b, cfg.discriminator_hidden),
                None => plain_spec(*d, cfg.discriminator_hidden),
            };
            Ok((train_d, test_d, spec))
        }
        JobData::Idx {
            base_train,
            base_test,
            train_subset,
            test_subset,
            noise,
            clip_to_unit,
        } => {
            let mut srng = Rng::with_stream(job.seed, Stream::Split);
            let (train_d, _) = stratified_subset(base_train, *train_subset, 0, &mut srng)?;
            let (test_d, _) = stratified_subset(base_test, *test_subset, 0, &mut srng)?;
            let mut nrng = Rng::with_stream(job.seed, Stream::Noise);
            let noise_spec = NoiseSpec {
                noise_factor: *noise,
                clip_to_unit: *clip_to_unit,
            };
            let train_d = add_noise(&train_d, &noise_spec, &mut nrng)?;
            let test_d = add_noise(&test_d, &noise_spec, &mut nrng)?;
            let input_dim = train_d.inputs.cols();
            let classes = train_d.targets.cols();
            let spec = match job.bottleneck {
                Some(b) => image_spec(input_dim, b, classes),
                None => plain_image_spec(input_dim, classes),
            };
            Ok((train_d, test_d, spec))
        }
    }
}

fn write_run_artifacts(
    out_dir: &Path,
    job: &Job,
    trace: &MetricTrace,
    metric: EvalMetric,
) -> Result<RunRecord> {
    let dir = out_dir
        .join("runs")
        .join(&job.grid)
        .join(&job.algorithm_label);
    fs::create_dir_all(&dir)?;

    let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", job.seed)))?;
    w.write_record(["epoch", "task_loss", "recon_loss", "test_metric"])?;
    for e in &trace.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.task_loss.to_string(),
            e.recon_loss.to_string(),
            e.test_metric.to_string(),
        ])?;
    }
    w.flush()?;

    let best = trace.recompute_best(metric);
    let record = RunRecord {
        grid: job.grid.clone(),
        algorithm: job.algorithm_label.clone(),
        seed: job.seed,
        best_metric: if trace.failed { None } else { best.map(|b| b.0) },
        best_epoch: best.map(|b| b.1).unwrap_or(0),
        failed: trace.failed,
    };
    // First epoch whose test metric competes for the best checkpoint (the
    // two-stage baseline's stage-1 rows do not).
    let eligible_from = trace
        .epochs
        .iter()
        .find(|e| e.counts_for_best)
        .map(|e| e.epoch)
        .unwrap_or(1);
    let run_json = serde_json::json!({
        "record": record,
        "metric": metric_name(metric),
        "eligible_from_epoch": eligible_from,
        "trace_failed": trace.failed,
    });
    fs::write(
        dir.join(format!("{}.json", job.seed)),
        serde_json::to_string_pretty(&run_json)?,
    )?;
    Ok(record)
}

pub fn metric_name(metric: EvalMetric) -> &'static str {
    match metric {
        EvalMetric::Mse => "mse",
        EvalMetric::Accuracy => "accuracy",
    }
}

/// Sample standard deviation (n - 1 denominator); zero for a single run.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregates per-run records, rows sorted by (grid, algorithm) so the
/// summary is canonical however the runs were produced. Failed runs are
/// excluded from the mean but counted in the failures column.
pub fn aggregate(per_run: &[RunRecord]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    for r in per_run {
        let key = (r.grid.clone(), r.algorithm.clone());
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order.sort();
    order
        .into_iter()
        .map(|(grid, algorithm)| {
            let rows: Vec<&RunRecord> = per_run
                .iter()
                .filter(|r| r.grid == grid && r.algorithm == algorithm)
                .collect();
            let values: Vec<f64> = rows.iter().filter_map(|r| r.best_metric).collect();
            let failures = rows.iter().filter(|r| r.failed).count();
            let (mean, std) = if values.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&values);
                (Some(m), Some(s))
            };
            AggregateRow {
                grid,
                algorithm,
                runs: values.len(),
                mean,
                std,
                failures,
            }
        })
        .collect()
}

pub fn write_summary(out_dir: &Path, summary: &Summary) -> Result<()> {
    let mut w = csv::Writer::from_path(out_dir.join("summary.csv"))?;
    w.write_record(["grid", "algorithm", "runs", "mean", "std", "failures"])?;
    for a in &summary.aggregates {
        w.write_record([
            a.grid.clone(),
            a.algorithm.clone(),
            a.runs.to_string(),
            a.mean.map(|v| v.to_string()).unwrap_or_default(),
            a.std.map(|v| v.to_string()).unwrap_or_default(),
            a.failures.to_string(),
        ])?;
    }
    w.flush()?;
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(summary)?,
    )?;
    fs::write(out_dir.join("tables.md"), render_tables(summary))?;
    Ok(())
}

/// Markdown mirror of the reference layout: one table per grid point,
/// algorithms as columns with bottleneck sub-columns.
pub fn render_tables(summary: &Summary) -> String {
    let mut grids: Vec<&str> = Vec::new();
    for a in &summary.aggregates {
        if !grids.contains(&a.grid.as_str()) {
            grids.push(&a.grid);
        }
    }
    let mut out = String::new();
    out.push_str(&format!("# Results ({} , lower-level rows in summary.csv)\n", summary.metric));
    for grid in grids {
        out.push_str(&format!("\n## {grid}\n\n"));
        let rows: Vec<&AggregateRow> = summary
            .aggregates
            .iter()
            .filter(|a| a.grid == grid)
            .collect();
        out.push_str("| algorithm | mean ± std | runs | failures |\n");
        out.push_str("|---|---|---|---|\n");
        for a in rows {
            let cell = match (a.mean, a.std) {
                (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
                _ => "—".to_string(),
            };
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                a.algorithm, cell, a.runs, a.failures
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(grid: &str, alg: &str, seed: u64, best: Option<f64>, failed: bool) -> RunRecord {
        RunRecord {
            grid: grid.into(),
            algorithm: alg.into(),
            seed,
            best_metric: best,
            best_epoch: 1,
            failed,
        }
    }

    #[test]
    fn failed_runs_are_excluded_from_the_mean_but_counted() {
        let rows = vec![
            record("g", "a", 0, Some(0.2), false),
            record("g", "a", 1, Some(0.4), false),
            record("g", "a", 2, None, true),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].runs, 2);
        assert_eq!(agg[0].failures, 1);
        assert!((agg[0].mean.unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn single_run_has_zero_std() {
        let rows = vec![record("g", "a", 0, Some(0.7), false)];
        let agg = aggregate(&rows);
        assert_eq!(agg[0].std, Some(0.0));
    }

    #[test]
    fn aggregate_rows_are_sorted_canonically() {
        let rows = vec![
            record("g2", "z", 0, Some(1.0), false),
            record("g1", "b", 0, Some(1.0), false),
            record("g1", "a", 0, Some(1.0), false),
        ];
        let agg = aggregate(&rows);
        let keys: Vec<(String, String)> =
            agg.iter().map(|a| (a.grid.clone(), a.algorithm.clone())).collect();
        assert_eq!(
            keys,
            vec![
                ("g1".to_string(), "a".to_string()),
                ("g1".to_string(), "b".to_string()),
                ("g2".to_string(), "z".to_string())
            ]
        );
    }
}

/// Runs the whole grid. `jobs` worker threads; results are ordered by the
/// deterministic expansion order no matter how workers interleave.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    out_dir: &Path,
    jobs: usize,
    data_dir: Option<&Path>,
) -> Result<Summary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let (task_loss, recon_loss, metric) = cfg.losses();
    let job_list = expand_jobs(cfg, seeds, data_dir)?;

    let run_one = |job: &Job| -> Result<RunRecord> {
        let (train_d, test_d, spec) = job_datasets(job, cfg)?;
        let plan = TrainingPlan {
            algorithm: job.algorithm,
            w_nn: cfg.w_nn,
            w_ae: cfg.w_ae,
            epochs: cfg.epochs,
            lr: cfg.lr,
            batch_size: cfg.batch_size,
            task_loss,
            recon_loss,
            eval_metric: metric,
            phases_per_epoch: cfg.phases_per_epoch,
        };
        let outcome = train(&spec, &train_d, &test_d, &plan, job.seed)?;
        write_run_artifacts(out_dir, job, &outcome.trace, metric)
    };

    let mut per_run: Vec<RunRecord> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building worker pool")?;
        let results: Vec<Result<RunRecord>> =
            pool.install(|| job_list.par_iter().map(run_one).collect());
        results.into_iter().collect::<Result<Vec<_>>>()?
    } else {
        job_list.iter().map(run_one).collect::<Result<Vec<_>>>()?
    };
    per_run.sort_by(|a, b| {
        (&a.grid, &a.algorithm, a.seed).cmp(&(&b.grid, &b.algorithm, b.seed))
    });

    let aggregates = aggregate(&per_run);
    let summary = Summary {
        version: 1,
        metric: metric_name(metric).to_string(),
        per_run,
        aggregates,
    };
    write_summary(out_dir, &summary)?;
    Ok(summary)
}
