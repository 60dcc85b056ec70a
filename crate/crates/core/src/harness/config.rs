//! Experiment configuration: presets and the flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! preset = desk            # applied first, wherever it appears
//! grammar = dyck1
//! hardness = hard0
//! cell = lstm              # lstm | o2rnn | o2rnn-tanh | elman
//! sdim = 2                 # omitted: the grammar's reference size
//! init = default
//! train_lengths = 2..40
//! test_lengths = 41..500
//! batch_size = 128
//! lr = 0.01
//! max_iters = 20000
//! val_every = 100
//! patience_iters = 7000
//! seeds = 0,1,2            # or a range such as 0..10
//! freeze = none            # none | recurrent-frozen
//! width = f64
//! train_size = 4000
//! val_size = 1000
//! test_size = 2000
//! length_decay = 0.1
//! bucket_width = 20
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::Grammar;
use crate::nn::{CellVariant, FloatWidth, Freeze, InitStrategy};
use crate::sampling::{Hardness, LengthRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Reduced scale: 20k iterations, 4000/1000/2000 strings, 3 seeds.
    Desk,
    /// Reference scale: 100k iterations, 10 seeds.
    Full,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::Parse(format!("unknown preset '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grammar: Grammar,
    pub hardness: Hardness,
    pub cell: CellVariant,
    /// Hidden size; `None` uses [`Grammar::reference_sdim`].
    pub sdim: Option<usize>,
    pub init: InitStrategy,
    pub train_lengths: LengthRange,
    pub test_lengths: LengthRange,
    pub batch_size: usize,
    pub lr: f64,
    pub max_iters: usize,
    pub val_every: usize,
    pub patience_iters: usize,
    pub seeds: Vec<u64>,
    pub freeze: Freeze,
    pub width: FloatWidth,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub length_decay: f64,
    pub bucket_width: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Full)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = ExperimentConfig {
            grammar: Grammar::dyck(1).expect("dyck1 is valid"),
            hardness: Hardness::Hard0,
            cell: CellVariant::Lstm,
            sdim: None,
            init: InitStrategy::Default,
            train_lengths: LengthRange { min: 2, max: 40 },
            test_lengths: LengthRange { min: 41, max: 500 },
            batch_size: 128,
            lr: 0.01,
            max_iters: 100_000,
            val_every: 100,
            patience_iters: 7000,
            seeds: (0..10).collect(),
            freeze: Freeze::None,
            width: FloatWidth::F64,
            train_size: 10_000,
            val_size: 1_000,
            test_size: 2_000,
            length_decay: 0.1,
            bucket_width: 20,
        };
        cfg.apply_preset(preset);
        cfg
    }

    /// Overwrites the scale-related fields only.
    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Desk => {
                self.max_iters = 20_000;
                self.train_size = 4_000;
                self.val_size = 1_000;
                self.test_size = 2_000;
                self.seeds = vec![0, 1, 2];
            }
            Preset::Full => {
                self.max_iters = 100_000;
                self.train_size = 10_000;
                self.val_size = 1_000;
                self.test_size = 2_000;
                self.seeds = (0..10).collect();
            }
        }
    }

    pub fn hidden(&self) -> usize {
        self.sdim.unwrap_or_else(|| self.grammar.reference_sdim())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.val_every == 0 || self.patience_iters % self.val_every != 0 {
            return bad(format!(
                "patience_iters ({}) must be a multiple of val_every ({})",
                self.patience_iters, self.val_every
            ));
        }
        if self.batch_size == 0 || self.max_iters == 0 || self.bucket_width == 0 {
            return bad("batch_size, max_iters and bucket_width must be positive".into());
        }
        if self.hidden() == 0 {
            return bad("sdim must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, n) in [("train_size", self.train_size), ("val_size", self.val_size), ("test_size", self.test_size)] {
            if n == 0 || n % 2 != 0 {
                return bad(format!("{name} must be a positive even number, got {n}"));
            }
        }
        LengthRange::new(self.train_lengths.min, self.train_lengths.max)?;
        LengthRange::new(self.test_lengths.min, self.test_lengths.max)?;
        if !(self.length_decay >= 0.0 && self.length_decay.is_finite()) {
            return bad(format!("length_decay must be >= 0, got {}", self.length_decay));
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 21] = [
        "grammar",
        "hardness",
        "cell",
        "sdim",
        "init",
        "train_lengths",
        "test_lengths",
        "batch_size",
        "lr",
        "max_iters",
        "val_every",
        "patience_iters",
        "seeds",
        "freeze",
        "width",
        "train_size",
        "val_size",
        "test_size",
        "length_decay",
        "bucket_width",
        "preset",
    ];

    /// Sets one field from its textual form. Keys match the field names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
        }
        match key {
            "grammar" => self.grammar = value.parse()?,
            "hardness" => self.hardness = value.parse()?,
            "cell" => self.cell = value.parse()?,
            "sdim" => {
                self.sdim = match value {
                    "" | "auto" | "reference" => None,
                    v => Some(num(key, v)?),
                }
            }
            "init" => self.init = value.parse()?,
            "train_lengths" => self.train_lengths = parse_range(key, value)?,
            "test_lengths" => self.test_lengths = parse_range(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "max_iters" => self.max_iters = num(key, value)?,
            "val_every" => self.val_every = num(key, value)?,
            "patience_iters" => self.patience_iters = num(key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "freeze" => self.freeze = value.parse()?,
            "width" => self.width = value.parse()?,
            "train_size" => self.train_size = num(key, value)?,
            "val_size" => self.val_size = num(key, value)?,
            "test_size" => self.test_size = num(key, value)?,
            "length_decay" => self.length_decay = num(key, value)?,
            "bucket_width" => self.bucket_width = num(key, value)?,
            "preset" => self.apply_preset(value.parse()?),
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. A `preset` line is applied
    /// before every other key.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = ExperimentConfig::default();
        for (k, v) in pairs.iter().filter(|(k, _)| k == "preset") {
            cfg.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Inverse of [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("grammar", self.grammar.name());
        kv("hardness", self.hardness.to_string());
        kv("cell", self.cell.to_string());
        kv("sdim", self.hidden().to_string());
        kv("init", self.init.to_string());
        kv("train_lengths", format!("{}..{}", self.train_lengths.min, self.train_lengths.max));
        kv("test_lengths", format!("{}..{}", self.test_lengths.min, self.test_lengths.max));
        kv("batch_size", self.batch_size.to_string());
        kv("lr", self.lr.to_string());
        kv("max_iters", self.max_iters.to_string());
        kv("val_every", self.val_every.to_string());
        kv("patience_iters", self.patience_iters.to_string());
        kv("seeds", seeds.join(","));
        kv("freeze", self.freeze.to_string());
        kv("width", self.width.to_string());
        kv("train_size", self.train_size.to_string());
        kv("val_size", self.val_size.to_string());
        kv("test_size", self.test_size.to_string());
        kv("length_decay", self.length_decay.to_string());
        kv("bucket_width", self.bucket_width.to_string());
        s
    }
}

/// `a..b` or `a-b`, both inclusive.
pub fn parse_range(key: &str, v: &str) -> Result<LengthRange> {
    let (a, b) = v
        .split_once("..")
        .or_else(|| v.split_once('-'))
        .ok_or_else(|| Error::Config(format!("{key}: expected min..max, got '{v}'")))?;
    let p = |s: &str| {
        s.trim()
            .trim_start_matches('=')
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
    };
    LengthRange::new(p(a)?, p(b)?)
}

/// Comma-separated seeds, or a half-open range `a..b`.
pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let err = || Error::Config(format!("seeds: cannot parse '{v}'"));
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| err())?;
        let b: u64 = b.trim().parse().map_err(|_| err())?;
        return if a < b { Ok((a..b).collect()) } else { Err(err()) };
    }
    let seeds = v
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| err()))
        .collect::<Result<Vec<u64>>>()?;
    if seeds.is_empty() {
        return Err(err());
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let desk = ExperimentConfig::preset(Preset::Desk);
        assert_eq!((desk.max_iters, desk.train_size, desk.val_size, desk.test_size), (20_000, 4000, 1000, 2000));
        assert_eq!(desk.seeds.len(), 3);
        let full = ExperimentConfig::preset(Preset::Full);
        assert_eq!(full.max_iters, 100_000);
        assert_eq!(full.seeds.len(), 10);
        assert_eq!(full.val_size * 10, full.train_size);
        assert_eq!((full.batch_size, full.lr, full.patience_iters), (128, 0.01, 7000));
        full.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let text = "grammar = anbncn\nhardness=hard2 # trailing\ncell = o2rnn\nseeds = 0..4\npreset = desk\nfreeze = classifier-only\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3]);
        assert_eq!(cfg.max_iters, 20_000);
        assert_eq!(cfg.hidden(), 6);
        assert_eq!(cfg.freeze, Freeze::RecurrentFrozen);
        let mut expected = cfg.clone();
        expected.sdim = Some(6);
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), expected);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("grammar").is_err());
        assert!(ExperimentConfig::parse("patience_iters = 150").is_err());
        assert!(ExperimentConfig::parse("seeds = ").is_err());
        assert!(ExperimentConfig::parse("train_size = 7").is_err());
        assert!(parse_range("x", "10..3").is_err());
        assert_eq!(parse_range("x", "41-500").unwrap(), LengthRange { min: 41, max: 500 });
    }
}
