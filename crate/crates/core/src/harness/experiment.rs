//! Multi-seed experiments, aggregation and Cartesian sweeps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::DatasetCache;
use super::eval::{evaluate, Bucket, Evaluation};
use super::training::{run_training, StopReason, TrainingLog};
use crate::error::{Error, Result};
use crate::nn::{CellVariant, Checkpoint, FloatWidth, Freeze, InitStrategy, Real};
use crate::sampling::Hardness;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    pub diverged: bool,
    pub stop_reason: StopReason,
    pub stopped_at: usize,
    pub best_iter: usize,
    pub evaluation: Evaluation,
    pub log: TrainingLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub per_seed_accuracy: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Accuracy pooled over seeds, one entry per length bucket.
    pub per_length_bucket: Vec<Bucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub summary: MetricsSummary,
    pub runs: Vec<SeedResult>,
}

impl ExperimentResult {
    pub fn diverged_seeds(&self) -> Vec<u64> {
        self.runs.iter().filter(|r| r.diverged).map(|r| r.seed).collect()
    }

    /// Best seed's accuracy over lengths `lo..=hi`.
    pub fn best_accuracy_between(&self, lo: usize, hi: usize) -> Option<f64> {
        self.runs
            .iter()
            .filter_map(|r| r.evaluation.accuracy_between(lo, hi))
            .max_by(f64::total_cmp)
    }
}

/// `(max, mean, population std)` of `values`.
pub fn aggregate(values: &[f64]) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = values.len() as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((max, mean, var.sqrt()))
}

pub fn summarize(runs: &[SeedResult]) -> Result<MetricsSummary> {
    let per_seed: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let (max, mean, std) = aggregate(&per_seed)?;
    let mut buckets = runs[0].evaluation.buckets.clone();
    for b in &mut buckets {
        b.count = 0;
        b.correct = 0;
    }
    for r in runs {
        for (acc, b) in buckets.iter_mut().zip(&r.evaluation.buckets) {
            acc.count += b.count;
            acc.correct += b.correct;
        }
    }
    Ok(MetricsSummary {
        per_seed_accuracy: per_seed,
        max,
        mean,
        std,
        per_length_bucket: buckets,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Seeds trained concurrently; 0 and 1 both mean sequential.
    pub jobs: usize,
    /// Where per-seed logs, bucket tables and checkpoints go.
    pub out_dir: Option<PathBuf>,
}

/// File-name stem shared by every artifact of one seed.
pub fn run_stem(cfg: &ExperimentConfig, seed: u64) -> String {
    format!(
        "{}_{}_{}_{}_{}_h{}_seed{}",
        cfg.grammar.name(),
        cfg.hardness,
        cfg.cell,
        cfg.freeze,
        cfg.init,
        cfg.hidden(),
        seed
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run_seed<F: Real>(
    cfg: &ExperimentConfig,
    seed: u64,
    cache: &DatasetCache,
    out_dir: Option<&Path>,
) -> Result<SeedResult> {
    let data = cache.get(cfg, seed)?;
    let trained = run_training::<F>(cfg, seed, &data)?;
    let evaluation = evaluate(&trained.model, &data.test, cfg.test_lengths, cfg.bucket_width)?;
    if let Some(dir) = out_dir {
        let stem = run_stem(cfg, seed);
        trained.log.write_csv(create(&dir.join(format!("{stem}_log.csv")))?)?;
        evaluation.write_buckets_csv(create(&dir.join(format!("{stem}_buckets.csv")))?)?;
        Checkpoint::from_model(&trained.model, cfg.init, seed)
            .with_grammar(cfg.grammar.name())
            .save(&dir.join(format!("{stem}_model.json")))?;
    }
    Ok(SeedResult {
        seed,
        accuracy: evaluation.accuracy,
        diverged: trained.log.diverged(),
        stop_reason: trained.log.reason,
        stopped_at: trained.log.stopped_at,
        best_iter: trained.log.best_iter,
        evaluation,
        log: trained.log,
    })
}

/// Trains and evaluates every seed of `cfg`, then aggregates.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    run_experiment_cached(cfg, opts, &DatasetCache::new())
}

pub fn run_experiment_cached(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    cache: &DatasetCache,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let out = opts.out_dir.as_deref();
    let one = |seed: u64| match cfg.width {
        FloatWidth::F64 => run_seed::<f64>(cfg, seed, cache, out),
        FloatWidth::F32 => run_seed::<f32>(cfg, seed, cache, out),
    };
    let runs: Vec<SeedResult> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| cfg.seeds.par_iter().map(|&s| one(s)).collect::<Result<_>>())?
    } else {
        cfg.seeds.iter().map(|&s| one(s)).collect::<Result<_>>()?
    };
    Ok(ExperimentResult {
        config: cfg.clone(),
        summary: summarize(&runs)?,
        runs,
    })
}

/// Values swept over; an empty axis keeps the base configuration's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub cells: Vec<CellVariant>,
    pub hardness: Vec<Hardness>,
    pub inits: Vec<InitStrategy>,
    pub freezes: Vec<Freeze>,
}

impl SweepAxes {
    /// Cartesian product in the order cell, hardness, init, freeze.
    pub fn configs(&self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        fn or<T: Copy>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for &cell in &or(&self.cells, base.cell) {
            for &hardness in &or(&self.hardness, base.hardness) {
                for &init in &or(&self.inits, base.init) {
                    for &freeze in &or(&self.freezes, base.freeze) {
                        out.push(ExperimentConfig {
                            cell,
                            hardness,
                            init,
                            freeze,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

pub const RESULTS_HEADER: [&str; 10] =
    ["grammar", "hardness", "cell", "freeze", "init", "sdim", "seed_count", "max", "mean", "std"];

/// One row per experiment.
pub fn write_results_csv<W: Write>(results: &[ExperimentResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        let c = &r.config;
        w.write_record([
            c.grammar.name(),
            c.hardness.to_string(),
            c.cell.to_string(),
            c.freeze.to_string(),
            c.init.to_string(),
            c.hidden().to_string(),
            r.runs.len().to_string(),
            r.summary.max.to_string(),
            r.summary.mean.to_string(),
            r.summary.std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every configuration of the sweep, sharing datasets across cells,
/// and writes `results.csv` into `opts.out_dir` when set.
pub fn run_sweep(base: &ExperimentConfig, axes: &SweepAxes, opts: &RunOptions) -> Result<Vec<ExperimentResult>> {
    let cache = DatasetCache::new();
    let results = axes
        .configs(base)
        .iter()
        .map(|cfg| run_experiment_cached(cfg, opts, &cache))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &opts.out_dir {
        write_results_csv(&results, create(&dir.join("results.csv"))?)?;
    }
    Ok(results)
}
