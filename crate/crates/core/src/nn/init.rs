//! Weight initialization strategies.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::cells::CellVariant;
use super::model::Model;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::sampling::{rng_from_seed, SampleRng};

/// Every bias, classifier bias included, starts here.
pub const BIAS_INIT: f64 = 0.01;
pub const SPARSE_ZERO_PROB: f64 = 0.9;
pub const SPARSE_STD: f64 = 0.01;
pub const NORMAL_STD: f64 = 0.1;
pub const UNIFORM_BOUND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// `LstmDefault` for LSTM and Elman, `O2rnnDefault` for O2RNN.
    Default,
    /// U(−1/√k, 1/√k), k = hidden size.
    LstmDefault,
    /// U(−√k, √k), taken literally.
    LstmLiteral,
    /// N(0, 0.1²).
    O2rnnDefault,
    /// U(−0.1, 0.1).
    Uniform,
    /// QR of a standard normal matrix, gain 1.
    Orthogonal,
    /// Zero with probability 0.9, else N(0, 0.01²).
    Sparse,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 7] = [
        InitStrategy::Default,
        InitStrategy::LstmDefault,
        InitStrategy::LstmLiteral,
        InitStrategy::O2rnnDefault,
        InitStrategy::Uniform,
        InitStrategy::Orthogonal,
        InitStrategy::Sparse,
    ];

    pub fn resolve(self, variant: CellVariant) -> InitStrategy {
        match (self, variant) {
            (InitStrategy::Default, CellVariant::O2rnn(_)) => InitStrategy::O2rnnDefault,
            (InitStrategy::Default, _) => InitStrategy::LstmDefault,
            (s, _) => s,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::Default => "default",
            InitStrategy::LstmDefault => "lstm-default",
            InitStrategy::LstmLiteral => "lstm-literal",
            InitStrategy::O2rnnDefault => "o2rnn-default",
            InitStrategy::Uniform => "uniform",
            InitStrategy::Orthogonal => "orthogonal",
            InitStrategy::Sparse => "sparse",
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        match key.as_str() {
            "normal" => return Ok(InitStrategy::O2rnnDefault),
            "orth" => return Ok(InitStrategy::Orthogonal),
            _ => {}
        }
        InitStrategy::ALL
            .into_iter()
            .find(|i| i.name() == key)
            .ok_or_else(|| Error::Parse(format!("unknown init strategy '{s}'")))
    }
}

/// Weight sampler for one resolved strategy.
fn fill_weights(strategy: InitStrategy, hidden: usize, t: &mut [f64], rng: &mut SampleRng) {
    let k = hidden as f64;
    let uniform = |bound: f64, t: &mut [f64], rng: &mut SampleRng| {
        let d = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        t.iter_mut().for_each(|v| *v = d.sample(rng));
    };
    match strategy {
        InitStrategy::LstmDefault => uniform(1.0 / k.sqrt(), t, rng),
        InitStrategy::LstmLiteral => uniform(k.sqrt(), t, rng),
        InitStrategy::Uniform => uniform(UNIFORM_BOUND, t, rng),
        InitStrategy::O2rnnDefault => {
            let d = Normal::new(0.0, NORMAL_STD).expect("positive std");
            t.iter_mut().for_each(|v| *v = d.sample(rng));
        }
        InitStrategy::Sparse => {
            let d = Normal::new(0.0, SPARSE_STD).expect("positive std");
            for v in t.iter_mut() {
                *v = if rng.random_bool(SPARSE_ZERO_PROB) { 0.0 } else { d.sample(rng) };
            }
        }
        InitStrategy::Orthogonal | InitStrategy::Default => {
            unreachable!("resolved and handled by the caller")
        }
    }
}

/// Orthogonal `rows × cols` matrix, row-major: orthonormal columns when
/// `rows ≥ cols`, orthonormal rows otherwise.
pub fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix so the result is uniformly distributed
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(q[(i, j)]);
        }
    }
    out
}

fn init_tensor(strategy: InitStrategy, hidden: usize, t: &mut Tensor<f64>, rng: &mut SampleRng) {
    if strategy != InitStrategy::Orthogonal {
        fill_weights(strategy, hidden, t.data_mut(), rng);
        return;
    }
    match *t.shape() {
        [rows, cols] => {
            let q = orthogonal_matrix(rows, cols, rng);
            t.data_mut().copy_from_slice(&q);
        }
        // rank-3 (hidden, input, hidden): one orthogonal slice per input symbol
        [h, input, h2] => {
            for j in 0..input {
                let q = orthogonal_matrix(h, h2, rng);
                let data = t.data_mut();
                for i in 0..h {
                    for k in 0..h2 {
                        data[(i * input + j) * h2 + k] = q[i * h2 + k];
                    }
                }
            }
        }
        _ => unreachable!("weights are matrices or rank-3"),
    }
}

/// Fresh model for `variant`. Cell weights follow `strategy`, the classifier
/// weights use U(−1/√k, 1/√k) and every bias is 0.01.
pub fn initialize<F: Real>(
    variant: CellVariant,
    hidden: usize,
    input: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<Model<F>> {
    if hidden == 0 || input == 0 {
        return Err(Error::Shape("hidden and input sizes must be positive".into()));
    }
    let strategy = strategy.resolve(variant);
    let mut rng = rng_from_seed(seed);
    let mut m = Model::<f64>::zeros(variant, hidden, input);
    let names: Vec<String> = m.tensors().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(m.tensors_mut()) {
        if t.shape().len() == 1 {
            t.fill(BIAS_INIT);
        } else if name == "clf_W" {
            fill_weights(InitStrategy::LstmDefault, hidden, t.data_mut(), &mut rng);
        } else {
            init_tensor(strategy, hidden, t, &mut rng);
        }
    }
    Ok(m.cast())
}
