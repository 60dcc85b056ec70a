use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rnnlab::fixed_points::{
    count_region_sweep, critical_weight, find_fixed_points, grid_points, write_sweep_csv, ActivationParams,
};
use rnnlab::grammar::Grammar;
use rnnlab::harness::config::parse_seeds;
use rnnlab::harness::eval::evaluate;
use rnnlab::harness::{run_experiment, run_stem, run_sweep, ExperimentConfig, RunOptions, SweepAxes};
use rnnlab::nn::{Activation, Checkpoint, FloatWidth, Real};
use rnnlab::precision::{collapse_count, estimate_nmax, PrecisionParams};
use rnnlab::sampling::{build_dataset, write_dataset, DatasetSpec, LengthRange};
use rnnlab::selfcheck::run_selfcheck;
use rnnlab::trace::{counting_statistic, export_trace_csv, record_trace, trace_file_name};

use crate::args::{
    Command, ConfigArgs, EvalArgs, FixedPointsArgs, GenDataArgs, PrecisionArgs, SweepArgs, TraceArgs, TrainArgs,
};

/// Environment variable overriding every seed flag.
pub const SEED_ENV: &str = "RNNLAB_SEED";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values, reported before any work starts.
    Usage(String),
    Runtime(String),
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl From<rnnlab::Error> for CliError {
    fn from(e: rnnlab::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::FixedPoints(a) => fixed_points(a),
        Command::Precision(a) => precision(a),
        Command::Trace(a) => trace(a),
        Command::Verify => verify(),
    }
}

fn seed_override() -> CliResult<Option<Vec<u64>>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => parse_seeds(&v).map(Some).map_err(|e| usage(format!("{SEED_ENV}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn gen_data(a: GenDataArgs) -> CliResult {
    let range = rnnlab::harness::config::parse_range("lengths", &a.lengths).map_err(usage)?;
    let seed = match seed_override()? {
        Some(s) if s.len() == 1 => s[0],
        Some(_) => return Err(usage(format!("{SEED_ENV} must name a single seed for gen-data"))),
        None => a.seed,
    };
    let spec = DatasetSpec {
        grammar: a.grammar.parse().map_err(usage)?,
        hardness: a.hardness.parse().map_err(usage)?,
        len_min: range.min,
        len_max: range.max,
        size: a.size,
        length_decay: a.length_decay,
        seed,
        max_duplicates: a.max_duplicates,
    };
    spec.validate().map_err(usage)?;
    let rows = build_dataset(&spec)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_dataset(&a.out, &spec, &rows)?;
    let positives = rows.iter().filter(|r| r.label).count();
    println!(
        "wrote {} strings ({} positive, {} negative) of {} {} to {}",
        rows.len(),
        positives,
        rows.len() - positives,
        spec.grammar,
        spec.hardness,
        a.out.display()
    );
    Ok(())
}

/// Preset, then config file, then individual flags, then the seed override.
pub fn build_config(a: &ConfigArgs) -> CliResult<ExperimentConfig> {
    let mut text = match &a.config {
        Some(p) => fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    if let Some(p) = &a.preset {
        // later preset lines win, explicit keys in the file still apply on top
        text.push_str(&format!("\npreset = {p}\n"));
    }
    let mut cfg = ExperimentConfig::parse(&text).map_err(usage)?;
    for (k, v) in a.pairs() {
        cfg.set(k, v).map_err(usage)?;
    }
    if let Some(seeds) = seed_override()? {
        cfg.seeds = seeds;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn experiment_stem(cfg: &ExperimentConfig) -> String {
    let s = run_stem(cfg, 0);
    s.trim_end_matches("_seed0").to_string()
}

fn train(a: TrainArgs) -> CliResult {
    let cfg = build_config(&a.config)?;
    let opts = RunOptions {
        jobs: a.jobs,
        out_dir: a.out.clone(),
    };
    let r = run_experiment(&cfg, &opts)?;
    for run in &r.runs {
        println!(
            "seed {:>3}  accuracy {:6.2}%  stop {:?} at {} (best {})",
            run.seed, run.accuracy, run.stop_reason, run.stopped_at, run.best_iter
        );
    }
    println!(
        "{} {} {} {}: max {:.2} mean {:.2} std {:.2}",
        cfg.grammar, cfg.hardness, cfg.cell, cfg.freeze, r.summary.max, r.summary.mean, r.summary.std
    );
    let diverged = r.diverged_seeds();
    if !diverged.is_empty() {
        println!("diverged seeds: {diverged:?}");
    }
    if let Some(dir) = &a.out {
        let path = dir.join(format!("{}_summary.json", experiment_stem(&cfg)));
        let mut w = create(&path)?;
        let doc = serde_json::json!({
            "config": cfg,
            "summary": r.summary,
            "diverged_seeds": diverged,
        });
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn checkpoint_grammar(ck: &Checkpoint, flag: Option<&str>) -> CliResult<Grammar> {
    let name = flag
        .or(ck.grammar.as_deref())
        .ok_or_else(|| usage("the checkpoint records no grammar; pass --grammar"))?;
    let g: Grammar = name.parse().map_err(usage)?;
    if g.alphabet_size() != ck.input {
        return Err(usage(format!(
            "{g} has {} symbols but the model expects {}",
            g.alphabet_size(),
            ck.input
        )));
    }
    Ok(g)
}

fn eval(a: EvalArgs) -> CliResult {
    let ck = Checkpoint::load(&a.model)?;
    let g = checkpoint_grammar(&ck, a.grammar.as_deref())?;
    let rows = rnnlab::sampling::read_dataset(&a.data, &g)?;
    let lo = rows.iter().map(|r| r.len()).min().ok_or_else(|| usage("dataset is empty"))?;
    let hi = rows.iter().map(|r| r.len()).max().unwrap_or(lo);
    let range = LengthRange::new(lo.max(1), hi.max(1)).map_err(usage)?;
    let e = match ck.width {
        FloatWidth::F64 => evaluate(&ck.to_model::<f64>()?, &rows, range, a.bucket_width)?,
        FloatWidth::F32 => evaluate(&ck.to_model::<f32>()?, &rows, range, a.bucket_width)?,
    };
    println!("accuracy {:.2}% ({}/{})", e.accuracy, e.correct, e.count);
    for b in e.buckets.iter().filter(|b| b.count > 0) {
        println!("  {:>4}-{:<4} {:6.2}% of {}", b.lo, b.hi, b.accuracy().unwrap_or(0.0), b.count);
    }
    if let Some(out) = &a.out {
        e.write_buckets_csv(create(out)?)?;
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(items: &[String]) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    items.iter().map(|s| s.trim().parse::<T>().map_err(usage)).collect()
}

fn sweep(a: SweepArgs) -> CliResult {
    let cfg = build_config(&a.config)?;
    let axes = SweepAxes {
        cells: parse_list(&a.cells)?,
        hardness: parse_list(&a.hardness_levels)?,
        inits: parse_list(&a.inits)?,
        freezes: parse_list(&a.freezes)?,
    };
    let opts = RunOptions {
        jobs: a.jobs,
        out_dir: Some(a.out.clone()),
    };
    let results = run_sweep(&cfg, &axes, &opts)?;
    for r in &results {
        let c = &r.config;
        println!(
            "{:<10} {:<6} {:<11} {:<17} {:<12} max {:6.2} mean {:6.2} std {:6.2}",
            c.grammar.name(),
            c.hardness,
            c.cell,
            c.freeze,
            c.init,
            r.summary.max,
            r.summary.mean,
            r.summary.std
        );
    }
    println!("wrote {}", a.out.join("results.csv").display());
    Ok(())
}

fn parse_grid(flag: &str, text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("--{flag} '{text}': {e}")))?;
    match nums[..] {
        [start, stop, step] => grid_points(start, stop, step).map_err(usage),
        _ => Err(usage(format!("--{flag} expects start:stop:step, got '{text}'"))),
    }
}

fn fixed_points(a: FixedPointsArgs) -> CliResult {
    let kind: Activation = a.kind.parse().map_err(usage)?;
    match (&a.w_grid, &a.b_grid, a.critical, a.w, a.b) {
        (Some(wg), Some(bg), false, None, None) => {
            let cells = count_region_sweep(kind, &parse_grid("w_grid", wg)?, &parse_grid("b_grid", bg)?);
            let three = cells.iter().filter(|c| c.count == 3).count();
            match &a.out {
                Some(p) => {
                    write_sweep_csv(&cells, create(p)?)?;
                    println!("{} cells, {} with three fixed points; wrote {}", cells.len(), three, p.display());
                }
                None => write_sweep_csv(&cells, io::stdout().lock())?,
            }
        }
        (None, None, true, None, Some(b)) => {
            println!("critical_w = {}", critical_weight(kind, b));
        }
        (None, None, false, Some(w), Some(b)) => {
            let report = find_fixed_points(ActivationParams::new(kind, w, b).map_err(usage)?);
            println!("{kind}(w*x + b) with w = {w}, b = {b}: {} fixed point(s)", report.count());
            for p in &report.points {
                println!("  xi = {:.12}  |f'(xi)| = {:.6}  {}", p.xi, p.derivative_magnitude, p.stability);
            }
            if let Some(p) = &a.out {
                report.write_csv(create(p)?)?;
            }
        }
        _ => {
            return Err(usage(
                "give --w and --b, or --w_grid and --b_grid, or --critical with --b",
            ))
        }
    }
    Ok(())
}

fn parse_pair(flag: &str, text: &str) -> CliResult<(f64, f64)> {
    let bad = || usage(format!("--{flag} expects lo,hi, got '{text}'"));
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

fn precision(a: PrecisionArgs) -> CliResult {
    let mut p = match (a.epsilon, &a.width) {
        (Some(_), Some(_)) => return Err(usage("--epsilon and --width are mutually exclusive")),
        (Some(e), None) => PrecisionParams::with_epsilon(e),
        (None, Some(w)) => PrecisionParams::for_width(w.parse().map_err(usage)?),
        (None, None) => PrecisionParams::rounded_f32(),
    };
    if let Some(f) = a.noticeable_factor {
        p.noticeable_factor = f;
    }
    if let Some(r) = &a.dynamic_range {
        p.dynamic_range = parse_pair("dynamic_range", r)?;
    }
    if let Some(f) = a.conservative_factor {
        p.conservative_factor = f;
    }
    p.validate().map_err(usage)?;
    let report = estimate_nmax(&p)?;
    print!("{}", report.to_key_values());
    let collapse = match (a.xi_plus, a.xi_minus) {
        (Some(xp), Some(xm)) => {
            let n = collapse_count(xp, xm, p.epsilon)?;
            match n {
                Some(n) => println!("collapse_count = {n}"),
                None => println!("collapse_count = none below the scan limit"),
            }
            Some(n)
        }
        _ => None,
    };
    if let Some(out) = &a.out {
        let mut w = create(out)?;
        let doc = serde_json::json!({ "params": p, "report": report, "collapse_count": collapse.flatten() });
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn trace(a: TraceArgs) -> CliResult {
    let ck = Checkpoint::load(&a.model)?;
    let g = checkpoint_grammar(&ck, a.grammar.as_deref())?;
    let word = g.parse_word(&a.string).map_err(usage)?;
    let tr = match ck.width {
        FloatWidth::F64 => record(&ck.to_model::<f64>()?, &word)?,
        FloatWidth::F32 => record(&ck.to_model::<f32>()?, &word)?,
    };
    fs::create_dir_all(&a.out)?;
    let path: PathBuf = a.out.join(trace_file_name(&g, ck.cell, ck.seed, &word));
    export_trace_csv(&tr, &g, &path)?;
    println!("p = {:.6}  {} steps  wrote {}", tr.probability, tr.steps.len(), path.display());
    if let Some(unit) = a.unit {
        let s = counting_statistic(&tr, unit).map_err(usage)?;
        println!("unit {unit}: monotone runs per block {:?}, saturated {}", s.monotone_runs, s.saturated);
    }
    Ok(())
}

fn record<F: Real>(
    model: &rnnlab::nn::Model<F>,
    word: &[rnnlab::grammar::Symbol],
) -> CliResult<rnnlab::trace::TrajectoryTrace> {
    Ok(record_trace(model, word)?)
}

fn verify() -> CliResult {
    let results = run_selfcheck();
    for r in &results {
        println!(
            "{} {:<32} {:>7.3}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} of {} checks failed", results.len())));
    }
    println!("all {} checks passed", results.len());
    Ok(())
}
