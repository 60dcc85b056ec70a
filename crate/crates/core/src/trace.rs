//! Per-step hidden and cell state trajectories, CSV export and a simple
//! counting statistic.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grammar::{Grammar, Symbol};
use crate::nn::{CellVariant, FloatWidth, Model, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1-based position of the symbol just consumed.
    pub t: usize,
    pub symbol: Symbol,
    pub h: Vec<f64>,
    pub c: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrace {
    pub word: Vec<Symbol>,
    pub steps: Vec<TraceStep>,
    /// Classifier output after the last step.
    pub probability: f64,
    pub width: FloatWidth,
}

impl TrajectoryTrace {
    pub fn hidden(&self) -> usize {
        self.steps.first().map_or(0, |s| s.h.len())
    }

    pub fn has_cell(&self) -> bool {
        self.steps.first().is_some_and(|s| s.c.is_some())
    }
}

/// Full forward pass of `word`, keeping every state. Values are widened to
/// 64-bit, which is exact for 32-bit models.
pub fn record_trace<F: Real>(model: &Model<F>, word: &[Symbol]) -> Result<TrajectoryTrace> {
    let fwd = model.forward_sequence(word, true)?;
    let widen = |v: &[F]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
    let steps = fwd
        .trace
        .iter()
        .zip(word)
        .enumerate()
        .map(|(i, (s, &symbol))| TraceStep {
            t: i + 1,
            symbol,
            h: widen(&s.h),
            c: s.c.as_deref().map(widen),
        })
        .collect();
    Ok(TrajectoryTrace {
        word: word.to_vec(),
        steps,
        probability: fwd.probability.as_f64(),
        width: F::WIDTH,
    })
}

/// `{grammar}_{cell}_{seed}_{hash}.csv`, the hash being the first 12 hex
/// digits of the SHA-256 of the rendered string.
pub fn trace_file_name(g: &Grammar, cell: CellVariant, seed: u64, word: &[Symbol]) -> String {
    let digest = Sha256::digest(g.render(word).as_bytes());
    let mut hex = String::new();
    for b in &digest[..6] {
        let _ = write!(hex, "{b:02x}");
    }
    format!("{}_{}_{}_{}.csv", g.name(), cell, seed, hex)
}

/// Columns `t,symbol,h_0..h_{d−1}` plus `c_0..c_{d−1}` for LSTM traces.
pub fn write_trace_csv<W: Write>(tr: &TrajectoryTrace, g: &Grammar, out: W) -> Result<()> {
    let d = tr.hidden();
    let mut header = vec!["t".to_string(), "symbol".to_string()];
    header.extend((0..d).map(|i| format!("h_{i}")));
    if tr.has_cell() {
        header.extend((0..d).map(|i| format!("c_{i}")));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for s in &tr.steps {
        let mut rec = vec![s.t.to_string(), g.render(&[s.symbol])];
        rec.extend(s.h.iter().map(f64::to_string));
        if let Some(c) = &s.c {
            rec.extend(c.iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_trace_csv(tr: &TrajectoryTrace, g: &Grammar, path: &Path) -> Result<PathBuf> {
    write_trace_csv(tr, g, std::io::BufWriter::new(std::fs::File::create(path)?))?;
    Ok(path.to_path_buf())
}

/// Steps back from a trace CSV. Probability and width are not stored in the
/// file, so they come back as NaN and 64-bit.
pub fn read_trace_csv<R: Read>(input: R, g: &Grammar) -> Result<TrajectoryTrace> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let d = header.iter().filter(|h| h.starts_with("h_")).count();
    let with_c = header.iter().any(|h| h.starts_with("c_"));
    if header.len() != 2 + d * (1 + usize::from(with_c)) {
        return Err(Error::Parse("trace header does not match t,symbol,h_*,c_*".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{s}'")));
    let mut steps = Vec::new();
    let mut word = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let t = rec[0].parse().map_err(|_| Error::Parse(format!("bad step '{}'", &rec[0])))?;
        let sym = g.parse_word(&rec[1])?;
        if sym.len() != 1 {
            return Err(Error::Parse(format!("expected one symbol, got '{}'", &rec[1])));
        }
        let h = (0..d).map(|i| num(&rec[2 + i])).collect::<Result<Vec<_>>>()?;
        let c = if with_c {
            Some((0..d).map(|i| num(&rec[2 + d + i])).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        word.push(sym[0]);
        steps.push(TraceStep { t, symbol: sym[0], h, c });
    }
    Ok(TrajectoryTrace {
        word,
        steps,
        probability: f64::NAN,
        width: FloatWidth::F64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingStatistic {
    /// Longest strictly monotone run inside each maximal same-symbol block.
    pub monotone_runs: Vec<usize>,
    /// `|h|` above `1 − 10ε` for at least three consecutive steps.
    pub saturated: bool,
}

/// Runs are measured on `c` when the trace has it, else on `h`.
pub fn counting_statistic(tr: &TrajectoryTrace, unit: usize) -> Result<CountingStatistic> {
    if unit >= tr.hidden() {
        return Err(Error::Shape(format!("unit {unit} out of range for {} hidden units", tr.hidden())));
    }
    let value = |s: &TraceStep| s.c.as_ref().map_or(s.h[unit], |c| c[unit]);
    let mut monotone_runs = Vec::new();
    let mut start = 0;
    while start < tr.steps.len() {
        let sym = tr.steps[start].symbol;
        let end = tr.steps[start..]
            .iter()
            .position(|s| s.symbol != sym)
            .map_or(tr.steps.len(), |p| start + p);
        let vals: Vec<f64> = tr.steps[start..end].iter().map(value).collect();
        monotone_runs.push(longest_monotone_run(&vals));
        start = end;
    }

    let limit = 1.0 - 10.0 * tr.width.epsilon();
    let mut streak = 0;
    let mut saturated = false;
    for s in &tr.steps {
        streak = if s.h[unit].abs() > limit { streak + 1 } else { 0 };
        saturated |= streak >= 3;
    }
    Ok(CountingStatistic {
        monotone_runs,
        saturated,
    })
}

/// Length of the longest strictly increasing or strictly decreasing
/// contiguous stretch.
pub fn longest_monotone_run(v: &[f64]) -> usize {
    if v.is_empty() {
        return 0;
    }
    let (mut best, mut up, mut down) = (1, 1, 1);
    for w in v.windows(2) {
        up = if w[1] > w[0] { up + 1 } else { 1 };
        down = if w[1] < w[0] { down + 1 } else { 1 };
        best = best.max(up).max(down);
    }
    best
}
