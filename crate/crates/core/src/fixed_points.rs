//! Fixed points of the scalar maps `x ↦ act(w·x + b)`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Activation;

/// Bracket padding beyond the codomain of the activation.
pub const BRACKET_PAD: f64 = 0.5;
pub const GRID_CELLS: usize = 10_000;
/// Half-width of the band around |f'| = 1 labelled marginal.
pub const MARGINAL_BAND: f64 = 1e-8;
pub const RESIDUAL_TOL: f64 = 1e-12;
/// Upper end of the weight search in [`critical_weight`].
pub const CRITICAL_W_MAX: f64 = 1e3;
pub const CRITICAL_W_TOL: f64 = 1e-6;
const CRITICAL_W_SCAN: f64 = 1e-3;
pub const CONVERGENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationParams {
    pub kind: Activation,
    pub w: f64,
    pub b: f64,
}

impl ActivationParams {
    pub fn new(kind: Activation, w: f64, b: f64) -> Result<Self> {
        if !w.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite("activation parameters".into()));
        }
        Ok(ActivationParams { kind, w, b })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.kind.apply(self.w * x + self.b)
    }

    /// `f'(x) = w · act'(w·x + b)`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.w * self.kind.derivative_from_output(self.eval(x))
    }

    /// Search interval: the codomain padded on both sides.
    pub fn bracket(&self) -> (f64, f64) {
        match self.kind {
            Activation::Tanh => (-1.0 - BRACKET_PAD, 1.0 + BRACKET_PAD),
            Activation::Sigmoid => (-BRACKET_PAD, 1.0 + BRACKET_PAD),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn classify(derivative_magnitude: f64) -> Self {
        if derivative_magnitude < 1.0 - MARGINAL_BAND {
            Stability::Stable
        } else if derivative_magnitude > 1.0 + MARGINAL_BAND {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        })
    }
}

impl FromStr for Stability {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stable" => Ok(Stability::Stable),
            "unstable" => Ok(Stability::Unstable),
            "marginal" => Ok(Stability::Marginal),
            _ => Err(Error::Parse(format!("unknown stability '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub xi: f64,
    pub derivative_magnitude: f64,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub params: ActivationParams,
    /// Sorted ascending by `xi`.
    pub points: Vec<FixedPoint>,
}

impl FixedPointReport {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn stabilities(&self) -> Vec<Stability> {
        self.points.iter().map(|p| p.stability).collect()
    }

    /// Largest `|f(ξ) − ξ|` recomputed from the parameters.
    pub fn max_residual(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (self.params.eval(p.xi) - p.xi).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with header `xi,deriv,stability`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["xi", "deriv", "stability"])?;
        for p in &self.points {
            w.write_record([p.xi.to_string(), p.derivative_magnitude.to_string(), p.stability.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bisection on a sign change of `g` over `[lo, hi]`, run until the interval
/// cannot shrink further.
fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if (g_mid < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() <= g(hi).abs() {
        lo
    } else {
        hi
    }
}

/// All real solutions of `f(x) = x`, located by sign-change bracketing on a
/// 10⁴-cell grid and refined by bisection. Tangential roots, where `f(x) − x`
/// touches zero without crossing, are picked up at the extrema of `f(x) − x`.
pub fn find_fixed_points(a: ActivationParams) -> FixedPointReport {
    let g = |x: f64| a.eval(x) - x;
    let gp = |x: f64| a.derivative(x) - 1.0;
    let (lo, hi) = a.bracket();
    let step = (hi - lo) / GRID_CELLS as f64;
    let xs: Vec<f64> = (0..=GRID_CELLS).map(|i| lo + step * i as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();

    let mut roots = Vec::new();
    for i in 0..GRID_CELLS {
        if gs[i] == 0.0 {
            roots.push(xs[i]);
        } else if gs[i + 1] != 0.0 && (gs[i] < 0.0) != (gs[i + 1] < 0.0) {
            roots.push(bisect(g, xs[i], xs[i + 1]));
        }
    }
    if gs[GRID_CELLS] == 0.0 {
        roots.push(xs[GRID_CELLS]);
    }

    let gps: Vec<f64> = xs.iter().map(|&x| gp(x)).collect();
    for i in 0..GRID_CELLS {
        if (gps[i] < 0.0) != (gps[i + 1] < 0.0) {
            let x = bisect(gp, xs[i], xs[i + 1]);
            let near_known = roots.iter().any(|&r| (r - x).abs() < 10.0 * step);
            if g(x).abs() < RESIDUAL_TOL && !near_known {
                roots.push(x);
            }
        }
    }

    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + x.abs()));
    let points = roots
        .into_iter()
        .map(|xi| {
            let d = a.derivative(xi).abs();
            FixedPoint {
                xi,
                derivative_magnitude: d,
                stability: Stability::classify(d),
            }
        })
        .collect();
    FixedPointReport { params: a, points }
}

pub fn fixed_point_count(kind: Activation, w: f64, b: f64) -> usize {
    find_fixed_points(ActivationParams { kind, w, b }).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub w: f64,
    pub b: f64,
    pub count: usize,
}

/// Evenly spaced points from `start` to `stop` inclusive, `step` apart.
/// Each point is computed as `start + i·step` to avoid drift.
pub fn grid_points(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::Config(format!("bad grid {start}..{stop} step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

/// Fixed-point count for every `(w, b)` pair, `w` outermost.
pub fn count_region_sweep(kind: Activation, ws: &[f64], bs: &[f64]) -> Vec<SweepCell> {
    let cells: Vec<(f64, f64)> = ws.iter().flat_map(|&w| bs.iter().map(move |&b| (w, b))).collect();
    cells
        .into_par_iter()
        .map(|(w, b)| SweepCell {
            w,
            b,
            count: fixed_point_count(kind, w, b),
        })
        .collect()
}

/// CSV with header `w,b,count`.
pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["w", "b", "count"])?;
    for c in cells {
        w.write_record([c.w.to_string(), c.b.to_string(), c.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Whether `act(w·x + b) = x` has three distinct roots, decided exactly from
/// the signs of `g = act(w·x + b) − x` at its two turning points.
pub fn has_three_fixed_points(kind: Activation, w: f64, b: f64) -> bool {
    // turning points solve w·act'(u) = 1 with u = w·x + b
    let (u_lo, u_hi) = match kind {
        Activation::Tanh if w > 1.0 => {
            let u = (1.0 - 1.0 / w).sqrt().atanh();
            (-u, u)
        }
        Activation::Sigmoid if w > 4.0 => {
            let r = (1.0 - 4.0 / w).sqrt();
            let logit = |s: f64| (s / (1.0 - s)).ln();
            (logit(0.5 * (1.0 - r)), logit(0.5 * (1.0 + r)))
        }
        _ => return false,
    };
    let g = |u: f64| kind.apply(u) - (u - b) / w;
    g(u_lo) < 0.0 && g(u_hi) > 0.0
}

/// Smallest `w ∈ [0, 10³]` where the count turns from one to three, to within
/// 10⁻⁶. Returns `+∞` when there is no such weight.
///
/// For the sigmoid the three-point region in `w` is bounded, so the weight
/// axis is scanned on a 10⁻³ grid before bisecting.
pub fn critical_weight(kind: Activation, b: f64) -> f64 {
    let three = |w: f64| has_three_fixed_points(kind, w, b);
    let steps = (CRITICAL_W_MAX / CRITICAL_W_SCAN) as usize;
    let Some(first) = (1..=steps).find(|&i| three(i as f64 * CRITICAL_W_SCAN)) else {
        return f64::INFINITY;
    };
    let (mut lo, mut hi) = ((first - 1) as f64 * CRITICAL_W_SCAN, first as f64 * CRITICAL_W_SCAN);
    while hi - lo > CRITICAL_W_TOL {
        let mid = 0.5 * (lo + hi);
        if three(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub x: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates `x ← f(x)` until `|Δx| < 10⁻¹²` or `max_iters` steps.
pub fn iterate_to_fixed_point(a: ActivationParams, x0: f64, max_iters: usize) -> Iteration {
    let mut x = x0;
    for i in 1..=max_iters {
        let next = a.eval(x);
        let done = (next - x).abs() < CONVERGENCE_TOL;
        x = next;
        if done {
            return Iteration {
                x,
                iterations: i,
                converged: true,
            };
        }
    }
    Iteration {
        x,
        iterations: max_iters,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Activation::{Sigmoid, Tanh};
    use Stability::*;

    fn report(kind: Activation, w: f64, b: f64) -> FixedPointReport {
        find_fixed_points(ActivationParams::new(kind, w, b).unwrap())
    }

    #[test]
    fn identity_like_tanh_is_marginal() {
        let r = report(Tanh, 1.0, 0.0);
        assert_eq!(r.count(), 1);
        assert!(r.points[0].xi.abs() < 1e-4);
        assert_eq!(r.points[0].stability, Marginal);
    }

    #[test]
    fn three_fixed_points_at_w13() {
        let r = report(Tanh, 13.0, -6.0);
        assert_eq!(r.stabilities(), vec![Stable, Unstable, Stable]);
        assert!(r.max_residual() < 1e-10);
        assert_eq!(report(Tanh, 5.0, -6.0).count(), 1);
    }

    #[test]
    fn constant_sigmoid() {
        let r = report(Sigmoid, 0.0, 0.0);
        assert_eq!(r.count(), 1);
        assert_eq!(r.points[0].xi, 0.5);
        assert_eq!(r.points[0].derivative_magnitude, 0.0);
        assert_eq!(r.points[0].stability, Stable);
    }

    #[test]
    fn tangent_root_is_found() {
        // tanh(w x + b) = x touching at x0: w·sech²(w x0 + b) = 1
        let x0: f64 = 0.5;
        let w = 1.0 / (1.0 - x0 * x0);
        let b = x0.atanh() - w * x0;
        let r = report(Tanh, w, b);
        assert_eq!(r.count(), 2, "{r:?}");
        assert!(r.stabilities().contains(&Marginal));
    }

    #[test]
    fn sweep_rows() {
        let bs = grid_points(-8.0, -4.0, 0.25).unwrap();
        assert_eq!(bs.len(), 17);
        for kind in [Tanh, Sigmoid] {
            let cells = count_region_sweep(kind, &[5.0, 13.0], &bs);
            for c in cells {
                assert_eq!(c.count, if c.w == 13.0 { 3 } else { 1 }, "{kind} {c:?}");
            }
        }
        let contraction = count_region_sweep(Tanh, &[0.5], &grid_points(-10.0, 10.0, 0.5).unwrap());
        assert!(contraction.iter().all(|c| c.count == 1));
    }

    #[test]
    fn critical_weights() {
        let w0 = critical_weight(Tanh, 0.0);
        assert!((w0 - 1.0).abs() < 1e-5, "{w0}");
        let w6 = critical_weight(Tanh, -6.0);
        assert!(w6 > 5.0 && w6 < 13.0);
        assert_eq!(fixed_point_count(Tanh, w6 - 0.01, -6.0), 1);
        assert_eq!(fixed_point_count(Tanh, w6 + 0.01, -6.0), 3);
        // sigmoid with a large positive bias only ever has one fixed point
        assert_eq!(critical_weight(Sigmoid, 1e4), f64::INFINITY);
        // the sigmoid's three-point region is bounded in w, yet still found
        let s6 = critical_weight(Sigmoid, -6.0);
        assert!(s6 > 5.0 && s6 < 13.0, "{s6}");
        assert_eq!(fixed_point_count(Sigmoid, s6 - 0.01, -6.0), 1);
        assert_eq!(fixed_point_count(Sigmoid, s6 + 0.01, -6.0), 3);
        assert_eq!(fixed_point_count(Sigmoid, 1e3, -6.0), 1);
    }

    #[test]
    fn exact_predicate_agrees_with_root_count() {
        for kind in [Tanh, Sigmoid] {
            for w in grid_points(0.5, 20.0, 0.75).unwrap() {
                for b in grid_points(-9.0, 3.0, 0.5).unwrap() {
                    let n = fixed_point_count(kind, w, b);
                    if n != 2 {
                        assert_eq!(has_three_fixed_points(kind, w, b), n == 3, "{kind} w={w} b={b}");
                    }
                }
            }
        }
    }

    #[test]
    fn iteration_behaviour() {
        let a = ActivationParams::new(Tanh, 13.0, -6.0).unwrap();
        let r = find_fixed_points(a);
        let (lo, mid, hi) = (r.points[0].xi, r.points[1].xi, r.points[2].xi);
        let it = iterate_to_fixed_point(a, mid + 1e-6, 10_000);
        assert!(it.converged && (it.x - hi).abs() < 1e-9);
        let it = iterate_to_fixed_point(a, lo + 0.01, 10_000);
        assert!(it.converged && (it.x - lo).abs() < 1e-9);
        let mut x = hi;
        for _ in 0..100 {
            x = a.eval(x);
            assert!((x - hi).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        report(Tanh, 13.0, -6.0).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "xi,deriv,stability");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].ends_with(",unstable"));
    }
}
