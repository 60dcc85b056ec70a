//! LSTM, second-order (O2RNN) and Elman cells over one-hot inputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tensor::{sigmoid, Real, Tensor};
use crate::error::{Error, Result};
use crate::grammar::Symbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<F: Real>(self, y: F) -> F {
        match self {
            Activation::Sigmoid => y * (F::one() - y),
            Activation::Tanh => F::one() - y * y,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::Parse(format!("unknown activation '{s}'"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellVariant {
    Lstm,
    O2rnn(Activation),
    Elman,
}

impl fmt::Display for CellVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellVariant::Lstm => f.write_str("lstm"),
            CellVariant::O2rnn(Activation::Sigmoid) => f.write_str("o2rnn"),
            CellVariant::O2rnn(Activation::Tanh) => f.write_str("o2rnn-tanh"),
            CellVariant::Elman => f.write_str("elman"),
        }
    }
}

impl FromStr for CellVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "lstm" => Ok(CellVariant::Lstm),
            "o2rnn" | "o2rnn-sigmoid" => Ok(CellVariant::O2rnn(Activation::Sigmoid)),
            "o2rnn-tanh" => Ok(CellVariant::O2rnn(Activation::Tanh)),
            "elman" | "rnn" | "elman-tanh" => Ok(CellVariant::Elman),
            _ => Err(Error::Parse(format!("unknown cell '{s}'"))),
        }
    }
}

/// Recurrent state. `c` is present only for LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState<F> {
    pub h: Vec<F>,
    pub c: Option<Vec<F>>,
}

/// Gate order inside [`LstmParams::gates`].
pub const GATE_I: usize = 0;
pub const GATE_F: usize = 1;
pub const GATE_O: usize = 2;
pub const GATE_C: usize = 3;
pub const GATE_NAMES: [&str; 4] = ["i", "f", "o", "c"];

/// Input matrix `w` (hidden × input), recurrent matrix `u` (hidden × hidden)
/// and bias `b` of one LSTM gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<F> {
    pub w: Tensor<F>,
    pub u: Tensor<F>,
    pub b: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<F> {
    pub gates: [Gate<F>; 4],
}

/// `w` has shape (hidden, input, hidden), indexed `w[i][j][k]` for output
/// unit `i`, input symbol `j` and previous-state unit `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct O2rnnParams<F> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElmanParams<F> {
    /// hidden × hidden
    pub w: Tensor<F>,
    /// hidden × input
    pub u: Tensor<F>,
    pub b: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellParams<F> {
    Lstm(LstmParams<F>),
    O2rnn(O2rnnParams<F>),
    Elman(ElmanParams<F>),
}

impl<F: Real> LstmParams<F> {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let gate = || Gate {
            w: Tensor::zeros(&[hidden, input]),
            u: Tensor::zeros(&[hidden, hidden]),
            b: Tensor::zeros(&[hidden]),
        };
        LstmParams {
            gates: [gate(), gate(), gate(), gate()],
        }
    }

    pub fn hidden(&self) -> usize {
        self.gates[0].b.len()
    }

    pub fn input(&self) -> usize {
        self.gates[0].w.shape()[1]
    }

    /// One step for input symbol `x`.
    pub fn step_symbol(&self, x: usize, h: &[F], c: &[F]) -> (Vec<F>, Vec<F>) {
        let hidden = self.hidden();
        let mut gates = vec![F::zero(); 4 * hidden];
        let mut c_new = vec![F::zero(); hidden];
        let mut h_new = vec![F::zero(); hidden];
        let mut tc = vec![F::zero(); hidden];
        self.forward_into(x, h, c, &mut gates, &mut c_new, &mut h_new, &mut tc);
        (h_new, c_new)
    }

    /// Slice kernel shared by single steps and the training tape. `gates`
    /// holds the four activations gate-major, `tc` receives `tanh(c)`.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    pub(crate) fn forward_into(
        &self,
        x: usize,
        h_prev: &[F],
        c_prev: &[F],
        gates: &mut [F],
        c: &mut [F],
        h: &mut [F],
        tc: &mut [F],
    ) {
        let hidden = h_prev.len();
        for (g, gate) in self.gates.iter().enumerate() {
            for r in 0..hidden {
                let z = gate.w.at(r, x) + dot(gate.u.row(r), h_prev) + gate.b.data()[r];
                gates[g * hidden + r] = if g == GATE_C { z.tanh() } else { sigmoid(z) };
            }
        }
        for r in 0..hidden {
            let i = gates[GATE_I * hidden + r];
            let f = gates[GATE_F * hidden + r];
            let o = gates[GATE_O * hidden + r];
            let cand = gates[GATE_C * hidden + r];
            c[r] = f * c_prev[r] + i * cand;
            tc[r] = c[r].tanh();
            h[r] = o * tc[r];
        }
    }
}

#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

impl<F: Real> O2rnnParams<F> {
    pub fn zeros(hidden: usize, input: usize, activation: Activation) -> Self {
        O2rnnParams {
            w: Tensor::zeros(&[hidden, input, hidden]),
            b: Tensor::zeros(&[hidden]),
            activation,
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.len()
    }

    pub fn input(&self) -> usize {
        self.w.shape()[1]
    }

    /// `h'_i = act(Σ_k w[i][x][k] h_k + b_i)`: a one-hot input selects slice `x`.
    pub fn step_symbol(&self, x: usize, h: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.hidden()];
        self.forward_into(x, h, &mut out);
        out
    }

    #[inline]
    pub(crate) fn forward_into(&self, x: usize, h_prev: &[F], h: &mut [F]) {
        let hidden = h_prev.len();
        let input = self.input();
        let w = self.w.data();
        for i in 0..hidden {
            let off = (i * input + x) * hidden;
            let z = dot(&w[off..off + hidden], h_prev) + self.b.data()[i];
            h[i] = self.activation.apply(z);
        }
    }
}

impl<F: Real> ElmanParams<F> {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        ElmanParams {
            w: Tensor::zeros(&[hidden, hidden]),
            u: Tensor::zeros(&[hidden, input]),
            b: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.len()
    }

    pub fn input(&self) -> usize {
        self.u.shape()[1]
    }

    /// `h' = tanh(W h + U x + b)`.
    pub fn step_symbol(&self, x: usize, h: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.hidden()];
        self.forward_into(x, h, &mut out);
        out
    }

    #[inline]
    pub(crate) fn forward_into(&self, x: usize, h_prev: &[F], h: &mut [F]) {
        for r in 0..h_prev.len() {
            let z = dot(self.w.row(r), h_prev) + self.u.at(r, x) + self.b.data()[r];
            h[r] = z.tanh();
        }
    }
}

impl<F: Real> CellParams<F> {
    pub fn zeros(variant: CellVariant, hidden: usize, input: usize) -> Self {
        match variant {
            CellVariant::Lstm => CellParams::Lstm(LstmParams::zeros(hidden, input)),
            CellVariant::O2rnn(a) => CellParams::O2rnn(O2rnnParams::zeros(hidden, input, a)),
            CellVariant::Elman => CellParams::Elman(ElmanParams::zeros(hidden, input)),
        }
    }

    pub fn variant(&self) -> CellVariant {
        match self {
            CellParams::Lstm(_) => CellVariant::Lstm,
            CellParams::O2rnn(p) => CellVariant::O2rnn(p.activation),
            CellParams::Elman(_) => CellVariant::Elman,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            CellParams::Lstm(p) => p.hidden(),
            CellParams::O2rnn(p) => p.hidden(),
            CellParams::Elman(p) => p.hidden(),
        }
    }

    pub fn input(&self) -> usize {
        match self {
            CellParams::Lstm(p) => p.input(),
            CellParams::O2rnn(p) => p.input(),
            CellParams::Elman(p) => p.input(),
        }
    }

    pub fn initial_state(&self) -> CellState<F> {
        let h = vec![F::zero(); self.hidden()];
        let c = matches!(self, CellParams::Lstm(_)).then(|| h.clone());
        CellState { h, c }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<F>)> {
        match self {
            CellParams::Lstm(p) => {
                let mut out = Vec::with_capacity(12);
                for (kind, pick) in [("W", 0usize), ("U", 1), ("b", 2)] {
                    for (g, gate) in p.gates.iter().enumerate() {
                        let t = [&gate.w, &gate.u, &gate.b][pick];
                        out.push((format!("{kind}_{}", GATE_NAMES[g]), t));
                    }
                }
                out
            }
            CellParams::O2rnn(p) => vec![("w".into(), &p.w), ("b".into(), &p.b)],
            CellParams::Elman(p) => vec![("W".into(), &p.w), ("U".into(), &p.u), ("b".into(), &p.b)],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            CellParams::Lstm(p) => {
                let [g0, g1, g2, g3] = &mut p.gates;
                let gs = [g0, g1, g2, g3];
                let mut w = Vec::new();
                let mut u = Vec::new();
                let mut b = Vec::new();
                for g in gs {
                    w.push(&mut g.w);
                    u.push(&mut g.u);
                    b.push(&mut g.b);
                }
                w.into_iter().chain(u).chain(b).collect()
            }
            CellParams::O2rnn(p) => vec![&mut p.w, &mut p.b],
            CellParams::Elman(p) => vec![&mut p.w, &mut p.u, &mut p.b],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden(), self.input());
        if h == 0 || i == 0 {
            return Err(Error::Shape("hidden and input sizes must be positive".into()));
        }
        match self {
            CellParams::Lstm(p) => {
                for gate in &p.gates {
                    gate.w.check_shape(&[h, i], "LSTM input weights")?;
                    gate.u.check_shape(&[h, h], "LSTM recurrent weights")?;
                    gate.b.check_shape(&[h], "LSTM bias")?;
                }
            }
            CellParams::O2rnn(p) => {
                p.w.check_shape(&[h, i, h], "O2RNN weights")?;
            }
            CellParams::Elman(p) => {
                p.w.check_shape(&[h, h], "Elman recurrent weights")?;
                p.u.check_shape(&[h, i], "Elman input weights")?;
            }
        }
        for (name, t) in self.tensors() {
            t.check_finite(&name)?;
        }
        Ok(())
    }

    /// One step from `prev` for input symbol `x`.
    pub fn step_symbol(&self, x: Symbol, prev: &CellState<F>) -> Result<CellState<F>> {
        let x = x as usize;
        if x >= self.input() {
            return Err(Error::InvalidSymbol {
                symbol: x.to_string(),
                grammar: format!("{}-symbol input", self.input()),
            });
        }
        if prev.h.len() != self.hidden() {
            return Err(Error::Shape(format!(
                "state has {} units, cell has {}",
                prev.h.len(),
                self.hidden()
            )));
        }
        Ok(match self {
            CellParams::Lstm(p) => {
                let c = prev
                    .c
                    .as_ref()
                    .filter(|c| c.len() == p.hidden())
                    .ok_or_else(|| Error::Shape("LSTM state needs a cell vector".into()))?;
                let (h, c) = p.step_symbol(x, &prev.h, c);
                CellState { h, c: Some(c) }
            }
            CellParams::O2rnn(p) => CellState {
                h: p.step_symbol(x, &prev.h),
                c: None,
            },
            CellParams::Elman(p) => CellState {
                h: p.step_symbol(x, &prev.h),
                c: None,
            },
        })
    }

    /// One step for a one-hot input vector.
    pub fn step(&self, x: &[F], prev: &CellState<F>) -> Result<CellState<F>> {
        self.step_symbol(one_hot_index(x, self.input())?, prev)
    }
}

pub fn one_hot<F: Real>(symbol: Symbol, size: usize) -> Vec<F> {
    let mut v = vec![F::zero(); size];
    v[symbol as usize] = F::one();
    v
}

/// Index of the single `1` in a one-hot vector.
pub fn one_hot_index<F: Real>(x: &[F], size: usize) -> Result<Symbol> {
    if x.len() != size {
        return Err(Error::Shape(format!("input has {} entries, cell expects {size}", x.len())));
    }
    let ones: Vec<usize> = (0..x.len()).filter(|&i| x[i] == F::one()).collect();
    if ones.len() != 1 || x.iter().filter(|&&v| v != F::zero()).count() != 1 {
        return Err(Error::Shape("input is not one-hot".into()));
    }
    Ok(ones[0] as Symbol)
}

pub fn lstm_step<F: Real>(p: &LstmParams<F>, x: &[F], prev: &CellState<F>) -> Result<CellState<F>> {
    CellParams::Lstm(p.clone()).step(x, prev)
}

pub fn o2rnn_step<F: Real>(p: &O2rnnParams<F>, x: &[F], prev: &CellState<F>) -> Result<CellState<F>> {
    let sym = one_hot_index(x, p.input())?;
    if prev.h.len() != p.hidden() {
        return Err(Error::Shape("state size mismatch".into()));
    }
    Ok(CellState {
        h: p.step_symbol(sym as usize, &prev.h),
        c: None,
    })
}

pub fn elman_step<F: Real>(p: &ElmanParams<F>, x: &[F], prev: &CellState<F>) -> Result<CellState<F>> {
    let sym = one_hot_index(x, p.input())?;
    if prev.h.len() != p.hidden() {
        return Err(Error::Shape("state size mismatch".into()));
    }
    Ok(CellState {
        h: p.step_symbol(sym as usize, &prev.h),
        c: None,
    })
}
