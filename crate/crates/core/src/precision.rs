//! Finite-precision bounds on how many counts a bounded hidden state can
//! resolve, sigmoid saturation and the LSTM saturation predictor.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, FloatWidth, Real};

/// Single-precision epsilon rounded to three significant figures.
pub const ROUNDED_F32_EPSILON: f64 = 1.19e-7;
pub const DEFAULT_NOTICEABLE_FACTOR: f64 = 10.0;
pub const DEFAULT_DYNAMIC_RANGE: (f64, f64) = (-0.9, 0.9);
/// Largest α scanned by [`collapse_count`].
pub const COLLAPSE_ALPHA_MAX: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionParams {
    pub epsilon: f64,
    pub noticeable_factor: f64,
    pub dynamic_range: (f64, f64),
    pub conservative_factor: f64,
}

impl PrecisionParams {
    /// Machine epsilon of `width` with the default factors.
    pub fn for_width(width: FloatWidth) -> Self {
        Self::with_epsilon(width.epsilon())
    }

    /// The rounded 32-bit epsilon 1.19e-7 with the default factors.
    pub fn rounded_f32() -> Self {
        Self::with_epsilon(ROUNDED_F32_EPSILON)
    }

    pub fn with_epsilon(epsilon: f64) -> Self {
        PrecisionParams {
            epsilon,
            noticeable_factor: DEFAULT_NOTICEABLE_FACTOR,
            dynamic_range: DEFAULT_DYNAMIC_RANGE,
            conservative_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.dynamic_range;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.noticeable_factor > 0.0 && self.noticeable_factor.is_finite()) {
            return Err(Error::Config("noticeable factor must be positive".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("dynamic range ({lo}, {hi}) is not positive")));
        }
        if !(self.conservative_factor > 0.0 && self.conservative_factor <= 1.0) {
            return Err(Error::Config(format!(
                "conservative factor must lie in (0, 1], got {}",
                self.conservative_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub epsilon: f64,
    pub delta_h_min: f64,
    pub dynamic_range: f64,
    pub steps: f64,
    pub n_max: f64,
    pub saturation_z: f64,
}

impl PrecisionReport {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("epsilon", self.epsilon),
            ("delta_h_min", self.delta_h_min),
            ("dynamic_range", self.dynamic_range),
            ("steps", self.steps),
            ("n_max", self.n_max),
            ("saturation_z", self.saturation_z),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// `Δh_min = factor·ε`, `steps = range/Δh_min`, `N_max = f·steps`.
pub fn estimate_nmax(p: &PrecisionParams) -> Result<PrecisionReport> {
    p.validate()?;
    let delta_h_min = p.noticeable_factor * p.epsilon;
    let dynamic_range = p.dynamic_range.1 - p.dynamic_range.0;
    let steps = dynamic_range / delta_h_min;
    Ok(PrecisionReport {
        epsilon: p.epsilon,
        delta_h_min,
        dynamic_range,
        steps,
        n_max: p.conservative_factor * steps,
        saturation_z: saturation_threshold(p.epsilon),
    })
}

/// `ln(1/ε)`: beyond this pre-activation the sigmoid sits within ε of 1.
pub fn saturation_threshold(epsilon: f64) -> f64 {
    (1.0 / epsilon).ln()
}

/// `1 − σ(z)` evaluated as `σ(−z)`, which keeps full relative accuracy at
/// the given width where subtracting from 1 would not.
pub fn saturation_gap<F: Real>(z: F) -> F {
    sigmoid(-z)
}

/// Predicted final LSTM cell and hidden values after `n` balanced counts:
/// `c = n(ξ⁺ + ξ⁻)`, `h = tanh(c)`.
pub fn predict_lstm_saturation(xi_plus: f64, xi_minus: f64, n: u64) -> Result<(f64, f64)> {
    if !(xi_minus < xi_plus) {
        return Err(Error::Config(format!("need ξ⁻ < ξ⁺, got {xi_minus} and {xi_plus}")));
    }
    let c = n as f64 * (xi_plus + xi_minus);
    Ok((c, c.tanh()))
}

/// `|tanh(α ξ⁺ + α ξ⁻) − tanh(α ξ⁺ + (α+1) ξ⁻)|`.
pub fn collapse_gap(xi_plus: f64, xi_minus: f64, alpha: u64) -> f64 {
    let a = alpha as f64;
    let u = a * xi_plus + a * xi_minus;
    (u.tanh() - (u + xi_minus).tanh()).abs()
}

/// Smallest α in `1..=10⁷` whose consecutive balanced-prefix states differ
/// by less than `epsilon_layer`, or `None` if no such α exists.
///
/// As a function of `u = α(ξ⁺ + ξ⁻)` the gap is unimodal, so after its peak it
/// only shrinks and the first crossing can be found by bisection.
pub fn collapse_count(xi_plus: f64, xi_minus: f64, epsilon_layer: f64) -> Result<Option<u64>> {
    if !(epsilon_layer > 0.0) {
        return Err(Error::Config(format!("epsilon_layer must be positive, got {epsilon_layer}")));
    }
    if !xi_plus.is_finite() || !xi_minus.is_finite() {
        return Err(Error::NonFinite("fixed points".into()));
    }
    let gap = |a: u64| collapse_gap(xi_plus, xi_minus, a);
    let below = |a: u64| gap(a) < epsilon_layer;
    if below(1) {
        return Ok(Some(1));
    }
    // peak of the gap in u sits at u = −ξ⁻/2
    let s = xi_plus + xi_minus;
    let peak = if s != 0.0 { (-xi_minus / (2.0 * s)).max(1.0) } else { 1.0 };
    let mut lo = if peak.is_finite() && peak < COLLAPSE_ALPHA_MAX as f64 {
        peak.floor() as u64
    } else {
        1
    };
    // the gap may still rise up to the peak, so step back to a value that
    // is not yet below the threshold
    while lo > 1 && below(lo) {
        lo /= 2;
    }
    if below(lo) {
        return Ok(Some(lo));
    }
    let mut hi = COLLAPSE_ALPHA_MAX;
    if !below(hi) {
        return Ok(None);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounded_preset() {
        let r = estimate_nmax(&PrecisionParams::rounded_f32()).unwrap();
        assert_eq!(r.delta_h_min, 1.19e-6);
        assert_eq!(r.dynamic_range, 1.8);
        assert_eq!(r.n_max, 1.8 / 1.19e-6);
        assert!((r.n_max - 1.51261e6).abs() / 1.51261e6 < 5e-6);
        let mut half = PrecisionParams::rounded_f32();
        half.conservative_factor = 0.5;
        assert_eq!(estimate_nmax(&half).unwrap().n_max, r.n_max / 2.0);
    }

    #[test]
    fn invalid_params() {
        let mut p = PrecisionParams::for_width(FloatWidth::F32);
        p.dynamic_range = (0.5, 0.5);
        assert!(estimate_nmax(&p).is_err());
        p.dynamic_range = (-0.9, 0.9);
        p.conservative_factor = 1.5;
        assert!(estimate_nmax(&p).is_err());
    }

    #[test]
    fn thresholds() {
        assert!((saturation_threshold(1.19e-7) - 15.944).abs() < 1e-3);
        assert!((saturation_threshold(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        let t = saturation_threshold(f32::EPSILON as f64) as f32;
        assert_eq!(sigmoid(t + 1.0), 1.0f32);
        assert!(saturation_gap(t * 1.01) < f32::EPSILON);
        let t = saturation_threshold(f64::EPSILON);
        assert!(saturation_gap(t * 1.01) < f64::EPSILON);
    }

    #[test]
    fn lstm_prediction() {
        assert_eq!(predict_lstm_saturation(0.4, -0.4, 1000).unwrap(), (0.0, 0.0));
        let (c, h) = predict_lstm_saturation(0.6, -0.5, 200).unwrap();
        assert!((c - 20.0).abs() < 1e-9);
        assert!(1.0 - h < f32::EPSILON as f64);
        assert!(predict_lstm_saturation(-0.5, 0.6, 3).is_err());
    }

    fn scan(xp: f64, xm: f64, eps: f64, limit: u64) -> Option<u64> {
        (1..=limit).find(|&a| {
            let a = a as f64;
            ((a * xp + a * xm).tanh() - (a * xp + a * xm + xm).tanh()).abs() < eps
        })
    }

    #[test]
    fn collapse_matches_scan() {
        assert_eq!(collapse_count(0.3, -0.8, 2.0).unwrap(), Some(1));
        let got = collapse_count(0.99, -0.97, 1e-7).unwrap();
        assert!(got.is_some());
        assert_eq!(got, scan(0.99, -0.97, 1e-7, 100_000));
        for &(xp, xm) in &[(0.5, -0.2), (0.1, -0.7), (0.8, -0.79), (0.2, 0.3)] {
            for eps in [1e-2, 1e-5, 1e-9] {
                assert_eq!(collapse_count(xp, xm, eps).unwrap(), scan(xp, xm, eps, 2_000_000), "{xp} {xm} {eps}");
            }
        }
        // symmetric fixed points never saturate
        assert_eq!(collapse_count(0.5, -0.5, 1e-3).unwrap(), None);
        assert!(collapse_count(0.5, -0.4, 0.0).is_err());
    }
}
