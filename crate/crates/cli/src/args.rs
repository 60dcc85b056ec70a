use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Learnability and stability experiments for small recurrent networks on
/// Dyck and counter languages.
///
/// Setting RNNLAB_SEED overrides every seed flag (a single seed, a comma
/// list or a half-open range such as 0..5).
#[derive(Debug, Parser)]
#[command(name = "rnnlab", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a balanced labeled dataset to a JSON-lines file.
    GenData(GenDataArgs),
    /// Train every seed of one configuration and report test accuracy.
    Train(TrainArgs),
    /// Score a saved model on a dataset file.
    Eval(EvalArgs),
    /// Train the cartesian product of cells, hardness levels, inits and freeze modes.
    Sweep(SweepArgs),
    /// Fixed points of x -> act(w*x + b), or a count sweep over a (w, b) grid.
    FixedPoints(FixedPointsArgs),
    /// Finite-precision estimate of the largest distinguishable count.
    Precision(PrecisionArgs),
    /// Export the hidden (and cell) state trajectory of one string.
    Trace(TraceArgs),
    /// Run the built-in oracle, gradient and fixed-point self-checks.
    Verify,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub grammar: String,
    #[arg(long, default_value = "hard0")]
    pub hardness: String,
    /// Number of strings; must be even.
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Inclusive length range, `min..max`.
    #[arg(long, default_value = "2..40")]
    pub lengths: String,
    #[arg(long = "length_decay", visible_alias = "length-decay", default_value_t = 0.1)]
    pub length_decay: f64,
    #[arg(long = "max_duplicates", visible_alias = "max-duplicates")]
    pub max_duplicates: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// One flag per configuration key. Flags override `--config`, which in turn
/// overrides `--preset`.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// Configuration file in `key = value` form.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// desk or full.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub grammar: Option<String>,
    #[arg(long)]
    pub hardness: Option<String>,
    #[arg(long)]
    pub cell: Option<String>,
    #[arg(long)]
    pub sdim: Option<String>,
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long = "train_lengths", visible_alias = "train-lengths")]
    pub train_lengths: Option<String>,
    #[arg(long = "test_lengths", visible_alias = "test-lengths")]
    pub test_lengths: Option<String>,
    #[arg(long = "batch_size", visible_alias = "batch-size")]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long = "max_iters", visible_alias = "max-iters")]
    pub max_iters: Option<String>,
    #[arg(long = "val_every", visible_alias = "val-every")]
    pub val_every: Option<String>,
    #[arg(long = "patience_iters", visible_alias = "patience-iters")]
    pub patience_iters: Option<String>,
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub freeze: Option<String>,
    #[arg(long)]
    pub width: Option<String>,
    #[arg(long = "train_size", visible_alias = "train-size")]
    pub train_size: Option<String>,
    #[arg(long = "val_size", visible_alias = "val-size")]
    pub val_size: Option<String>,
    #[arg(long = "test_size", visible_alias = "test-size")]
    pub test_size: Option<String>,
    #[arg(long = "length_decay", visible_alias = "length-decay")]
    pub length_decay: Option<String>,
    #[arg(long = "bucket_width", visible_alias = "bucket-width")]
    pub bucket_width: Option<String>,
}

impl ConfigArgs {
    /// Flags that were given, as `(config key, value)`.
    pub fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all: [(&'static str, &Option<String>); 20] = [
            ("grammar", &self.grammar),
            ("hardness", &self.hardness),
            ("cell", &self.cell),
            ("sdim", &self.sdim),
            ("init", &self.init),
            ("train_lengths", &self.train_lengths),
            ("test_lengths", &self.test_lengths),
            ("batch_size", &self.batch_size),
            ("lr", &self.lr),
            ("max_iters", &self.max_iters),
            ("val_every", &self.val_every),
            ("patience_iters", &self.patience_iters),
            ("seeds", &self.seeds),
            ("freeze", &self.freeze),
            ("width", &self.width),
            ("train_size", &self.train_size),
            ("val_size", &self.val_size),
            ("test_size", &self.test_size),
            ("length_decay", &self.length_decay),
            ("bucket_width", &self.bucket_width),
        ];
        all.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory for per-seed logs, bucket tables, checkpoints and the summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seeds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// JSON-lines dataset written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// Needed only when the checkpoint does not record its grammar.
    #[arg(long)]
    pub grammar: Option<String>,
    #[arg(long = "bucket_width", visible_alias = "bucket-width", default_value_t = 20)]
    pub bucket_width: usize,
    /// Per-bucket CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma list of cells; empty keeps `--cell`.
    #[arg(long, value_delimiter = ',')]
    pub cells: Vec<String>,
    #[arg(long = "hardness_levels", visible_alias = "hardness-levels", value_delimiter = ',')]
    pub hardness_levels: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub inits: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub freezes: Vec<String>,
    /// Output directory; receives results.csv and per-seed artifacts.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct FixedPointsArgs {
    /// tanh or sigmoid.
    #[arg(long, default_value = "tanh")]
    pub kind: String,
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Weight grid `start:stop:step` for a count sweep.
    #[arg(long = "w_grid", visible_alias = "w-grid", allow_hyphen_values = true)]
    pub w_grid: Option<String>,
    /// Bias grid `start:stop:step` for a count sweep.
    #[arg(long = "b_grid", visible_alias = "b-grid", allow_hyphen_values = true)]
    pub b_grid: Option<String>,
    /// Smallest weight giving three fixed points at `--b`.
    #[arg(long)]
    pub critical: bool,
    /// CSV output; the report or sweep table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrecisionArgs {
    /// Machine epsilon; defaults to the rounded 32-bit value 1.19e-7.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Use the exact epsilon of f32 or f64 instead.
    #[arg(long)]
    pub width: Option<String>,
    #[arg(long = "noticeable_factor", visible_alias = "noticeable-factor")]
    pub noticeable_factor: Option<f64>,
    /// Usable hidden-state range `lo,hi`.
    #[arg(long = "dynamic_range", visible_alias = "dynamic-range", allow_hyphen_values = true)]
    pub dynamic_range: Option<String>,
    /// Conservative factor f in (0, 1].
    #[arg(long = "conservative_factor", visible_alias = "conservative-factor")]
    pub conservative_factor: Option<f64>,
    /// Upper and lower cell fixed points for the collapse estimate.
    #[arg(long = "xi_plus", visible_alias = "xi-plus", allow_hyphen_values = true, requires = "xi_minus")]
    pub xi_plus: Option<f64>,
    #[arg(long = "xi_minus", visible_alias = "xi-minus", allow_hyphen_values = true, requires = "xi_plus")]
    pub xi_minus: Option<f64>,
    /// JSON output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// The string to run, e.g. "(()())" or "aabbcc".
    #[arg(long)]
    pub string: String,
    #[arg(long)]
    pub grammar: Option<String>,
    /// Hidden unit for the counting statistic.
    #[arg(long)]
    pub unit: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}
