//! Experiment protocol: multi-seed training with early stopping, bucketed
//! evaluation and max/mean/std aggregation.

pub mod config;
pub mod data;
pub mod eval;
pub mod experiment;
pub mod training;

pub use config::{ExperimentConfig, Preset};
pub use data::{build_splits, DatasetCache, Splits};
pub use eval::{evaluate, evaluate_with, Bucket, Evaluation};
pub use experiment::{
    aggregate, run_experiment, run_experiment_cached, run_stem, run_sweep, summarize,
    write_results_csv, ExperimentResult, MetricsSummary, RunOptions, SeedResult, SweepAxes,
};
pub use training::{run_training, EarlyStopping, LogRow, StopDecision, StopReason, TrainedModel, TrainingLog};

/// Independent 64-bit seed for one purpose (`tag`) of a run seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
