//! JSON model checkpoints. Saving a loaded checkpoint reproduces the file
//! byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cells::CellVariant;
use super::init::InitStrategy;
use super::model::Model;
use super::tensor::{FloatWidth, Real, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "rnnlab-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub cell: CellVariant,
    pub hidden: usize,
    pub input: usize,
    pub width: FloatWidth,
    pub init: InitStrategy,
    pub seed: u64,
    /// Grammar the model was trained on, if any.
    #[serde(default)]
    pub grammar: Option<String>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model<F: Real>(model: &Model<F>, init: InitStrategy, seed: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            cell: model.variant(),
            hidden: model.hidden(),
            input: model.input(),
            width: F::WIDTH,
            init,
            seed,
            grammar: None,
            tensors: model
                .tensors()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().iter().map(|x| x.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn with_grammar(mut self, grammar: impl Into<String>) -> Self {
        self.grammar = Some(grammar.into());
        self
    }

    /// Rebuilds the model, checking names, shapes and values.
    pub fn to_model<F: Real>(&self) -> Result<Model<F>> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!("unknown checkpoint format '{}'", self.format)));
        }
        if self.width != F::WIDTH {
            return Err(Error::Config(format!(
                "checkpoint holds {} weights, {} requested",
                self.width,
                F::WIDTH
            )));
        }
        let mut model = Model::<F>::zeros(self.cell, self.hidden, self.input);
        let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} tensors, {} expected",
                self.tensors.len(),
                names.len()
            )));
        }
        for ((name, dst), src) in names.iter().zip(model.tensors_mut()).zip(&self.tensors) {
            if &src.name != name {
                return Err(Error::Parse(format!("expected tensor '{name}', found '{}'", src.name)));
            }
            let values = src.data.iter().map(|&x| F::from_f64(x)).collect();
            let t = Tensor::from_vec(&src.shape, values)?;
            t.check_shape(dst.shape(), name)?;
            *dst = t;
        }
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::cells::Activation;
    use crate::nn::init::initialize;

    #[test]
    fn byte_identical_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for variant in [CellVariant::Lstm, CellVariant::O2rnn(Activation::Tanh), CellVariant::Elman] {
            let m = initialize::<f64>(variant, 3, 4, InitStrategy::Orthogonal, 11).unwrap();
            let a = dir.path().join("a.json");
            let b = dir.path().join("b.json");
            Checkpoint::from_model(&m, InitStrategy::Orthogonal, 11).with_grammar("dyck2").save(&a).unwrap();
            let loaded = Checkpoint::load(&a).unwrap();
            assert_eq!(loaded.to_model::<f64>().unwrap(), m);
            loaded.save(&b).unwrap();
            assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        }
    }

    #[test]
    fn f32_round_trip_and_width_check() {
        let m = initialize::<f32>(CellVariant::Lstm, 2, 2, InitStrategy::Sparse, 1).unwrap();
        let ck = Checkpoint::from_model(&m, InitStrategy::Sparse, 1);
        let back: Checkpoint = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back.to_model::<f32>().unwrap(), m);
        assert!(back.to_model::<f64>().is_err());
    }

    #[test]
    fn corrupted_checkpoints_rejected() {
        let m = initialize::<f64>(CellVariant::Elman, 2, 2, InitStrategy::Uniform, 1).unwrap();
        let mut ck = Checkpoint::from_model(&m, InitStrategy::Uniform, 1);
        ck.tensors[0].shape = vec![4];
        assert!(ck.to_model::<f64>().is_err());
        let mut ck = Checkpoint::from_model(&m, InitStrategy::Uniform, 1);
        ck.tensors.pop();
        assert!(ck.to_model::<f64>().is_err());
        let mut ck = Checkpoint::from_model(&m, InitStrategy::Uniform, 1);
        ck.tensors[1].name = "bogus".into();
        assert!(ck.to_model::<f64>().is_err());
    }
}
