//! Quick self-test run by `rnnlab verify`: oracle agreement, gradient
//! fidelity, fixed-point counts, precision arithmetic and dataset bounds.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::counter_machine::built_in_cm;
use crate::error::Result;
use crate::fixed_points::{count_region_sweep, find_fixed_points, grid_points, ActivationParams, Stability};
use crate::grammar::{all_words, is_member, Grammar};
use crate::nn::gradcheck::check_gradients;
use crate::nn::{initialize, Activation, CellVariant, Checkpoint, InitStrategy, Model};
use crate::precision::{estimate_nmax, PrecisionParams};
use crate::sampling::{
    edit_distance, hard1_edit_budget, rng_from_seed, sample_negative_hard1, LabeledString, LengthRange,
    Provenance,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Membership predicate against the counter machine for every word up to
/// `max_len`.
pub fn oracle_agreement(g: &Grammar, max_len: usize) -> Result<(usize, usize)> {
    let cm = built_in_cm(g)?;
    let (mut checked, mut mismatches) = (0, 0);
    for len in 0..=max_len {
        for w in all_words(g.alphabet_size(), len) {
            checked += 1;
            if is_member(g, &w)? != cm.run(&w)?.accepted {
                mismatches += 1;
            }
        }
    }
    Ok((checked, mismatches))
}

fn check_oracles() -> Result<(bool, String)> {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["dyck1", "anbncn", "anbncndn", "anbmambn", "anbmambm"] {
        let g: Grammar = name.parse()?;
        let (n, bad) = oracle_agreement(&g, 8)?;
        ok &= bad == 0;
        parts.push(format!("{name}: {bad}/{n} mismatches"));
    }
    Ok((ok, parts.join(", ")))
}

fn check_grads() -> Result<(bool, String)> {
    let batch: Vec<LabeledString> = [(vec![0, 1, 1, 0], true), (vec![1, 1, 0, 1, 0, 0, 1], false), (vec![0], true)]
        .into_iter()
        .map(|(word, label)| LabeledString { word, label, provenance: Provenance::PositiveSample })
        .collect();
    let mut worst: f64 = 0.0;
    for cell in [CellVariant::Lstm, CellVariant::O2rnn(Activation::Sigmoid), CellVariant::Elman] {
        for seed in 0..3 {
            let m: Model<f64> = initialize(cell, 4, 2, InitStrategy::Orthogonal, seed)?;
            worst = worst.max(check_gradients(&m, &batch)?.max_relative_error);
        }
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.3e}")))
}

fn check_fixed_points() -> Result<(bool, String)> {
    let bs = grid_points(-8.0, -4.0, 0.25)?;
    let mut ok = true;
    for kind in [Activation::Tanh, Activation::Sigmoid] {
        for c in count_region_sweep(kind, &[5.0, 13.0], &bs) {
            let want = if c.w == 13.0 { 3 } else { 1 };
            ok &= c.count == want;
            if c.count == 3 {
                let r = find_fixed_points(ActivationParams { kind, w: c.w, b: c.b });
                ok &= r.stabilities() == [Stability::Stable, Stability::Unstable, Stability::Stable];
            }
        }
    }
    Ok((ok, format!("{} cells per activation", 2 * bs.len())))
}

fn check_precision() -> Result<(bool, String)> {
    let r = estimate_nmax(&PrecisionParams::rounded_f32())?;
    let ok = r.delta_h_min == 1.19e-6 && r.dynamic_range == 1.8;
    Ok((ok, format!("delta_h_min {} range {} n_max {:.6e}", r.delta_h_min, r.dynamic_range, r.n_max)))
}

fn check_hard1() -> Result<(bool, String)> {
    let g: Grammar = "anbncn".parse()?;
    let range = LengthRange::new(8, 40)?;
    let mut rng = rng_from_seed(1);
    let mut violations = 0;
    let n = 1000;
    for i in 0..n {
        let target = 8 + i % 33;
        let p = sample_negative_hard1(&g, target, range, &mut rng)?;
        let d = edit_distance(&p.sample.word, &p.source);
        let shorter = p.source.len().min(p.sample.word.len());
        if d == 0 || d > hard1_edit_budget(shorter) || is_member(&g, &p.sample.word)? {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations}/{n} negatives over budget")))
}

fn check_checkpoint() -> Result<(bool, String)> {
    let m: Model<f64> = initialize(CellVariant::Lstm, 3, 4, InitStrategy::Default, 5)?;
    let a = Checkpoint::from_model(&m, InitStrategy::Default, 5).to_json()?;
    let back: Checkpoint = serde_json::from_str(&a)?;
    let ok = back.to_model::<f64>()? == m && back.to_json()? == a;
    Ok((ok, format!("{} bytes", a.len())))
}

/// Runs every check. Nothing here trains a network, so it finishes quickly.
pub fn run_selfcheck() -> Vec<CheckResult> {
    vec![
        timed("membership-vs-counter-machine", check_oracles),
        timed("bptt-vs-finite-differences", check_grads),
        timed("fixed-point-regions", check_fixed_points),
        timed("precision-estimate", check_precision),
        timed("hard1-edit-budget", check_hard1),
        timed("checkpoint-round-trip", check_checkpoint),
    ]
}
