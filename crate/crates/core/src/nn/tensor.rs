use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloatWidth {
    F32,
    F64,
}

impl FloatWidth {
    pub fn epsilon(self) -> f64 {
        match self {
            FloatWidth::F32 => f32::EPSILON as f64,
            FloatWidth::F64 => f64::EPSILON,
        }
    }
}

impl fmt::Display for FloatWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FloatWidth::F32 => "f32",
            FloatWidth::F64 => "f64",
        })
    }
}

impl FromStr for FloatWidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f32" | "32" | "float32" => Ok(FloatWidth::F32),
            "f64" | "64" | "float64" => Ok(FloatWidth::F64),
            _ => Err(Error::Parse(format!("unknown float width '{s}'"))),
        }
    }
}

/// Scalar type the networks are generic over (`f32` or `f64`).
pub trait Real:
    Float
    + Default
    + fmt::Debug
    + fmt::Display
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    const WIDTH: FloatWidth;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const WIDTH: FloatWidth = FloatWidth::F32;

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const WIDTH: FloatWidth = FloatWidth::F64;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data,
        };
        t.check_finite("tensor data")?;
        Ok(t)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> F) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    /// Element `(r, c)` of a matrix.
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut F {
        let cols = self.shape[1];
        &mut self.data[r * cols + c]
    }

    /// Row `r` of a matrix.
    pub fn row(&self, r: usize) -> &[F] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn check_shape(&self, expected: &[usize], what: &str) -> Result<()> {
        if self.shape == expected {
            Ok(())
        } else {
            Err(Error::Shape(format!("{what}: expected {expected:?}, got {:?}", self.shape)))
        }
    }

    /// `self += alpha * other`, elementwise.
    pub fn axpy(&mut self, alpha: F, other: &Tensor<F>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: F) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    pub fn fill(&mut self, value: F) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| G::from_f64(x.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        assert!(matches!(
            Tensor::<f64>::from_vec(&[2], vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        let t = Tensor::<f64>::from_vec(&[2, 3], (0..6).map(|x| x as f64).collect()).unwrap();
        assert_eq!(t.at(1, 2), 5.0);
        assert_eq!(t.row(1), &[3.0, 4.0, 5.0]);
        assert!(t.check_shape(&[3, 2], "t").is_err());
    }

    #[test]
    fn axpy_is_exact_elementwise() {
        let mut a = Tensor::<f64>::full(&[3], 1.0);
        let g = Tensor::<f64>::full(&[3], 2.0);
        a.axpy(-0.01, &g);
        assert!(a.data().iter().all(|&x| x == 0.98));
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(0.01f64) - 0.502_499_979_166_875).abs() < 1e-15);
    }
}
