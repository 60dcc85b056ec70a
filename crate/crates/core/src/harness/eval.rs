//! Accuracy overall and per length bucket.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::Symbol;
use crate::nn::{Model, Real};
use crate::sampling::{LabeledString, LengthRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    /// Inclusive length bounds.
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub correct: usize,
}

impl Bucket {
    /// Percentage correct, `None` for an empty bucket.
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| 100.0 * self.correct as f64 / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub count: usize,
    pub correct: usize,
    /// Percentage in [0, 100].
    pub accuracy: f64,
    pub buckets: Vec<Bucket>,
}

impl Evaluation {
    /// Accuracy over the buckets lying entirely inside `[lo, hi]`.
    pub fn accuracy_between(&self, lo: usize, hi: usize) -> Option<f64> {
        let (count, correct) = self
            .buckets
            .iter()
            .filter(|b| b.lo >= lo && b.hi <= hi)
            .fold((0, 0), |(n, c), b| (n + b.count, c + b.correct));
        (count > 0).then(|| 100.0 * correct as f64 / count as f64)
    }

    /// CSV with header `bucket_lo,bucket_hi,count,correct,accuracy`; empty
    /// buckets leave the accuracy blank.
    pub fn write_buckets_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bucket_lo", "bucket_hi", "count", "correct", "accuracy"])?;
        for b in &self.buckets {
            w.write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                b.count.to_string(),
                b.correct.to_string(),
                b.accuracy().map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empty buckets of `width` lengths tiling `range`; the last may be shorter.
pub fn make_buckets(range: LengthRange, width: usize) -> Vec<Bucket> {
    (range.min..=range.max)
        .step_by(width.max(1))
        .map(|lo| Bucket {
            lo,
            hi: (lo + width.max(1) - 1).min(range.max),
            count: 0,
            correct: 0,
        })
        .collect()
}

/// Scores any predictor. Every row must have a length inside `range`.
pub fn evaluate_with(
    rows: &[LabeledString],
    range: LengthRange,
    bucket_width: usize,
    mut predict: impl FnMut(&[Symbol]) -> Result<bool>,
) -> Result<Evaluation> {
    if rows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if bucket_width == 0 {
        return Err(Error::Config("bucket width must be positive".into()));
    }
    let mut buckets = make_buckets(range, bucket_width);
    let mut correct = 0;
    for row in rows {
        if !range.contains(row.len()) {
            return Err(Error::Config(format!(
                "evaluation string of length {} lies outside [{}, {}]",
                row.len(),
                range.min,
                range.max
            )));
        }
        let ok = predict(&row.word)? == row.label;
        let b = &mut buckets[(row.len() - range.min) / bucket_width];
        b.count += 1;
        if ok {
            b.correct += 1;
            correct += 1;
        }
    }
    Ok(Evaluation {
        count: rows.len(),
        correct,
        accuracy: 100.0 * correct as f64 / rows.len() as f64,
        buckets,
    })
}

/// A string is accepted when `p > 0.5`.
pub fn evaluate<F: Real>(
    model: &Model<F>,
    rows: &[LabeledString],
    range: LengthRange,
    bucket_width: usize,
) -> Result<Evaluation> {
    let half = F::from_f64(0.5);
    evaluate_with(rows, range, bucket_width, |w| Ok(model.predict(w)? > half))
}
