//! JSON-lines dataset files plus a `.spec.json` sidecar holding the
//! [`DatasetSpec`] that produced them.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetSpec, LabeledString, Provenance};
use crate::error::{Error, Result};
use crate::grammar::Grammar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub s: String,
    pub label: u8,
    pub provenance: String,
    pub len: usize,
}

impl DatasetRow {
    pub fn from_labeled(g: &Grammar, row: &LabeledString) -> Self {
        DatasetRow {
            s: g.render(&row.word),
            label: u8::from(row.label),
            provenance: row.provenance.tag(),
            len: row.word.len(),
        }
    }

    pub fn to_labeled(&self, g: &Grammar) -> Result<LabeledString> {
        let word = g.parse_word(&self.s)?;
        if word.len() != self.len {
            return Err(Error::Parse(format!(
                "row '{}' declares len {} but has {} symbols",
                self.s,
                self.len,
                word.len()
            )));
        }
        let label = match self.label {
            0 => false,
            1 => true,
            other => return Err(Error::Parse(format!("label {other} is not 0 or 1"))),
        };
        Ok(LabeledString {
            word,
            label,
            provenance: Provenance::from_tag(&self.provenance)?,
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("spec.json")
}

/// Writes the rows as JSON lines and the generating [`DatasetSpec`] beside them.
pub fn write_dataset(path: &Path, spec: &DatasetSpec, rows: &[LabeledString]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, &DatasetRow::from_labeled(&spec.grammar, row))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let mut side = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut side, spec)?;
    side.write_all(b"\n")?;
    side.flush()?;
    Ok(())
}

pub fn read_dataset_spec(path: &Path) -> Result<DatasetSpec> {
    let file = File::open(sidecar_path(path))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn read_dataset(path: &Path, g: &Grammar) -> Result<Vec<LabeledString>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: DatasetRow = serde_json::from_str(&line)?;
        rows.push(row.to_labeled(g)?);
    }
    Ok(rows)
}
