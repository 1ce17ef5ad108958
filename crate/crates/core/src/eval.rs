//! Macro-F1 scoring and the repeated-holdout benchmark.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{split_train_test, DirectedGraph, LabelTable};
use crate::model::{FitConfig, ModelRegistry};

/// Macro-averaged F1 over `num_classes` classes. Classes with no true,
/// predicted or missed nodes score 0 and still count in the average.
pub fn macro_f1(
    predicted: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<(f64, Vec<f64>)> {
    if predicted.len() != truth.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Config(format!(
                "class index out of range ({p}, {t})"
            )));
        }
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let per_class: Vec<f64> = (0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    let macro_avg = per_class.iter().sum::<f64>() / num_classes as f64;
    Ok((macro_avg, per_class))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub models: Vec<String>,
    /// Role counts to sweep; empty means each model's default. The SBM always
    /// runs once at `K = C`.
    pub k_values: Vec<usize>,
    pub repeats: usize,
    pub train_fraction: f64,
    pub seed0: u64,
    /// Concurrent runs; `None` uses all cores.
    pub jobs: Option<usize>,
    pub fit: FitConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            models: vec!["sbm".into(), "ssmb".into(), "smmb".into()],
            k_values: Vec::new(),
            repeats: 100,
            train_fraction: 0.5,
            seed0: 0,
            jobs: None,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
    pub macro_f1: Option<f64>,
    pub per_class_f1: Vec<f64>,
    /// Fit plus prediction, excluding IO.
    pub wall_seconds: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub k: usize,
    pub runs: usize,
    pub failed: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_wall_seconds: f64,
    pub std_wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: BenchmarkConfig,
    pub num_classes: usize,
    pub zero_support_classes: String,
    pub splits: String,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates over successful runs, grouped by (model, K) in first-seen order.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in records {
        let key = (r.model.clone(), r.k);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(model, k)| {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.model == model && r.k == k)
                .collect();
            let ok: Vec<&RunRecord> = group.iter().copied().filter(|r| !r.failed()).collect();
            let f1: Vec<f64> = ok.iter().filter_map(|r| r.macro_f1).collect();
            let wall: Vec<f64> = ok.iter().map(|r| r.wall_seconds).collect();
            let (mean_f1, std_f1) = mean_std(&f1);
            let (mean_wall_seconds, std_wall_seconds) = mean_std(&wall);
            Aggregate {
                model,
                k,
                runs: ok.len(),
                failed: group.len() - ok.len(),
                mean_f1,
                std_f1,
                mean_wall_seconds,
                std_wall_seconds,
            }
        })
        .collect()
}

/// Fit one model on a split, predict every labelled TEST node and score it.
pub fn evaluate_run(
    registry: &ModelRegistry,
    graph: &DirectedGraph,
    split: &LabelTable,
    model: &str,
    config: &FitConfig,
    repeat: usize,
) -> RunRecord {
    let mut record = RunRecord {
        model: model.to_string(),
        k: config.k.unwrap_or(0),
        repeat,
        seed: config.seed,
        macro_f1: None,
        per_class_f1: Vec::new(),
        wall_seconds: 0.0,
        sweeps: 0,
        converged: false,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let strategy = registry.get(model)?;
        record.k = strategy.resolve_k(config, split.num_classes())?;
        let test = split.scored_test_nodes();
        if test.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let start = Instant::now();
        let fitted = strategy.fit(graph, split, config)?;
        let predicted: Vec<usize> = test.iter().map(|&v| fitted.predict(v)).collect();
        record.wall_seconds = start.elapsed().as_secs_f64();
        let truth: Vec<usize> = test.iter().map(|&v| split.label(v).unwrap()).collect();
        let (m, per_class) = macro_f1(&predicted, &truth, split.num_classes())?;
        record.macro_f1 = Some(m);
        record.per_class_f1 = per_class;
        record.sweeps = fitted.sweeps();
        record.converged = fitted.converged();
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("{model} K={} repeat {repeat} failed: {e}", record.k);
        record.error = Some(e.to_string());
    }
    record
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub model: String,
    pub k: usize,
}

/// The (model, K) grid: the SBM once at `K = C`, every other model at each
/// requested K or at its default.
pub fn benchmark_plan(
    registry: &ModelRegistry,
    config: &BenchmarkConfig,
    num_classes: usize,
) -> Result<Vec<PlannedRun>> {
    let mut plan = Vec::new();
    for name in &config.models {
        let strategy = registry.get(name)?;
        let ks: Vec<usize> = if strategy.name() == "sbm" {
            vec![num_classes]
        } else if config.k_values.is_empty() {
            vec![strategy.resolve_k(
                &FitConfig {
                    k: None,
                    ..config.fit.clone()
                },
                num_classes,
            )?]
        } else {
            config.k_values.clone()
        };
        for k in ks {
            plan.push(PlannedRun {
                model: strategy.name().to_string(),
                k,
            });
        }
    }
    Ok(plan)
}

/// Every (model, K, repeat) combination. Repeat `r` uses seed `seed0 + r` for
/// both its split and its fit, and the split is shared by all models.
pub fn run_benchmark(
    registry: &ModelRegistry,
    graph: &DirectedGraph,
    labels: &LabelTable,
    config: &BenchmarkConfig,
) -> Result<ExperimentReport> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {}",
            config.train_fraction
        )));
    }
    let c = labels.num_classes();
    let mut jobs: Vec<(String, usize, usize)> = Vec::new();
    for planned in benchmark_plan(registry, config, c)? {
        for r in 0..config.repeats {
            jobs.push((planned.model.clone(), planned.k, r));
        }
    }
    let splits: Vec<LabelTable> = (0..config.repeats)
        .map(|r| split_train_test(labels, config.train_fraction, config.seed0 + r as u64))
        .collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|(model, k, r)| {
                let fit = FitConfig {
                    k: Some(*k),
                    seed: config.seed0 + *r as u64,
                    ..config.fit.clone()
                };
                evaluate_run(registry, graph, &splits[*r], model, &fit, *r)
            })
            .collect()
    });
    Ok(ExperimentReport {
        config: config.clone(),
        num_classes: c,
        zero_support_classes: "scored as F1 = 0 and included in the macro average".into(),
        splits: "stratified; repeat r uses seed0 + r and is shared by all models".into(),
        aggregates: aggregate(&records),
        records,
    })
}

#[derive(Serialize)]
struct FlatRecord<'a> {
    model: &'a str,
    k: usize,
    repeat: usize,
    seed: u64,
    macro_f1: Option<f64>,
    per_class_f1: String,
    wall_seconds: f64,
    sweeps: usize,
    converged: bool,
    failed: bool,
    error: &'a str,
}

/// One row per run; per-class F1 values are `;`-separated.
pub fn records_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(FlatRecord {
            model: &r.model,
            k: r.k,
            repeat: r.repeat,
            seed: r.seed,
            macro_f1: r.macro_f1,
            per_class_f1: r
                .per_class_f1
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            wall_seconds: r.wall_seconds,
            sweeps: r.sweeps,
            converged: r.converged,
            failed: r.failed(),
            error: r.error.as_deref().unwrap_or(""),
        })
        .map_err(|e| Error::Config(e.to_string()))?;
    }
    csv_into_string(w)
}

/// Mean ± std of F1 and wall time per model and K.
pub fn plot_csv(aggregates: &[Aggregate]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for a in aggregates {
        w.serialize(a).map_err(|e| Error::Config(e.to_string()))?;
    }
    csv_into_string(w)
}

fn csv_into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
