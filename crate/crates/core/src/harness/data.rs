//! Train/validation/test splits, shared across cells for one
//! (grammar, hardness, seed).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::config::ExperimentConfig;
use super::derive_seed;
use crate::error::{Error, Result};
use crate::sampling::{build_dataset, DatasetSpec, LabeledString, LengthRange};

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<LabeledString>,
    pub val: Vec<LabeledString>,
    pub test: Vec<LabeledString>,
}

/// Dataset specs for the three splits of `seed`. They depend only on the
/// data-related fields of `cfg`, never on the cell or initialization.
pub fn split_specs(cfg: &ExperimentConfig, seed: u64) -> [DatasetSpec; 3] {
    let spec = |range: LengthRange, size: usize, tag: &str| DatasetSpec {
        grammar: cfg.grammar.clone(),
        hardness: cfg.hardness,
        len_min: range.min,
        len_max: range.max,
        size,
        length_decay: cfg.length_decay,
        seed: derive_seed(seed, tag),
        max_duplicates: None,
    };
    [
        spec(cfg.train_lengths, cfg.train_size, "train"),
        spec(cfg.train_lengths, cfg.val_size, "val"),
        spec(cfg.test_lengths, cfg.test_size, "test"),
    ]
}

pub fn build_splits(cfg: &ExperimentConfig, seed: u64) -> Result<Splits> {
    let [train, val, test] = split_specs(cfg, seed);
    let splits = Splits {
        train: build_dataset(&train)?,
        val: build_dataset(&val)?,
        test: build_dataset(&test)?,
    };
    if let Some(bad) = splits.test.iter().find(|r| !cfg.test_lengths.contains(r.len())) {
        return Err(Error::Config(format!("test string of length {} outside the test range", bad.len())));
    }
    Ok(splits)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct SplitKey {
    grammar: String,
    hardness: String,
    seed: u64,
    ranges: [usize; 4],
    sizes: [usize; 3],
    decay_bits: u64,
}

impl SplitKey {
    fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        SplitKey {
            grammar: cfg.grammar.name(),
            hardness: cfg.hardness.to_string(),
            seed,
            ranges: [cfg.train_lengths.min, cfg.train_lengths.max, cfg.test_lengths.min, cfg.test_lengths.max],
            sizes: [cfg.train_size, cfg.val_size, cfg.test_size],
            decay_bits: cfg.length_decay.to_bits(),
        }
    }
}

/// Memoizes [`build_splits`] so every cell in a sweep sees the same data.
#[derive(Debug, Default)]
pub struct DatasetCache {
    inner: Mutex<HashMap<SplitKey, Arc<Splits>>>,
}

impl DatasetCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, cfg: &ExperimentConfig, seed: u64) -> Result<Arc<Splits>> {
        let key = SplitKey::new(cfg, seed);
        if let Some(s) = self.inner.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(s));
        }
        // built outside the lock; a racing duplicate build yields identical data
        let splits = Arc::new(build_splits(cfg, seed)?);
        let mut map = self.inner.lock().expect("cache lock");
        Ok(Arc::clone(map.entry(key).or_insert(splits)))
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
