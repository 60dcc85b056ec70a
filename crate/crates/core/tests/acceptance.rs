//! End-to-end acceptance checks. Each test writes one `[PASS]`/`[FAIL]`
//! line straight to stdout so the verdicts show up even when output is
//! captured.
//!
//! The training criteria run desk-scale experiments and take several minutes
//! in total on one core.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use rnnlab::counter_machine::built_in_cm;
use rnnlab::fixed_points::{count_region_sweep, find_fixed_points, grid_points, ActivationParams, Stability};
use rnnlab::grammar::{all_words, is_member, Grammar, Symbol};
use rnnlab::harness::{run_experiment, ExperimentConfig, ExperimentResult, Preset, RunOptions};
use rnnlab::nn::{bptt_gradients, initialize, Activation, CellVariant, FloatWidth, Freeze, InitStrategy, Model};
use rnnlab::precision::{estimate_nmax, PrecisionParams};
use rnnlab::sampling::{
    edit_distance, rng_from_seed, sample_negative_hard1, Hardness, LabeledString, LengthRange, Provenance,
};

fn report(id: u32, name: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{verdict}] criterion {id} {name}: {detail}");
}

fn info(id: u32, name: &str, detail: &str) {
    let _ = writeln!(std::io::stdout().lock(), "[INFO] criterion {id} {name}: {detail}");
}

// ---------------------------------------------------------------------------
// 1. membership predicate vs counter machine, every string up to length 12

#[test]
fn c1_oracle_equivalence() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["dyck1", "anbncn", "anbncndn"] {
        let g: Grammar = name.parse().unwrap();
        let cm = built_in_cm(&g).unwrap();
        let (mut n, mut bad, mut members) = (0u64, 0u64, 0u64);
        for len in 0..=12 {
            for w in all_words(g.alphabet_size(), len) {
                let m = is_member(&g, &w).unwrap();
                n += 1;
                members += u64::from(m);
                if m != cm.run(&w).unwrap().accepted {
                    bad += 1;
                }
            }
        }
        ok &= bad == 0;
        details.push(format!("{name} {bad} mismatches in {n} strings ({members} members)"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    report(1, "oracle-equivalence", ok, &format!("{}; {secs:.1}s (limit 60s)", details.join(", ")));
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 2. BPTT vs central differences through an independent forward pass

type Params = HashMap<String, Vec<f64>>;

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Loss of `batch` recomputed from the raw parameter arrays.
fn oracle_loss(cell: CellVariant, hidden: usize, input: usize, p: &Params, batch: &[LabeledString]) -> f64 {
    let mut total = 0.0;
    for row in batch {
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        for &x in &row.word {
            let x = x as usize;
            match cell {
                CellVariant::Lstm => {
                    let pre = |g: &str, r: usize, h: &[f64]| {
                        let w = &p[&format!("W_{g}")];
                        let u = &p[&format!("U_{g}")];
                        let b = &p[&format!("b_{g}")];
                        w[r * input + x] + (0..hidden).map(|k| u[r * hidden + k] * h[k]).sum::<f64>() + b[r]
                    };
                    let mut nh = vec![0.0; hidden];
                    for r in 0..hidden {
                        let i = sig(pre("i", r, &h));
                        let f = sig(pre("f", r, &h));
                        let o = sig(pre("o", r, &h));
                        let cand = pre("c", r, &h).tanh();
                        c[r] = f * c[r] + i * cand;
                        nh[r] = o * c[r].tanh();
                    }
                    h = nh;
                }
                CellVariant::O2rnn(act) => {
                    let w = &p["w"];
                    let b = &p["b"];
                    h = (0..hidden)
                        .map(|i| {
                            let z: f64 = (0..hidden).map(|k| w[(i * input + x) * hidden + k] * h[k]).sum::<f64>() + b[i];
                            match act {
                                Activation::Sigmoid => sig(z),
                                Activation::Tanh => z.tanh(),
                            }
                        })
                        .collect();
                }
                CellVariant::Elman => {
                    let (w, u, b) = (&p["W"], &p["U"], &p["b"]);
                    h = (0..hidden)
                        .map(|r| ((0..hidden).map(|k| w[r * hidden + k] * h[k]).sum::<f64>() + u[r * input + x] + b[r]).tanh())
                        .collect();
                }
            }
        }
        let z: f64 = (0..hidden).map(|k| p["clf_W"][k] * h[k]).sum::<f64>() + p["clf_b"][0];
        let prob = sig(z);
        total -= if row.label { prob.ln() } else { (1.0 - prob).ln() };
    }
    total / batch.len() as f64
}

#[test]
fn c2_gradient_fidelity() {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    // Central differences cannot resolve a slope finer than about eps*|L|/h.
    // Components below FLOOR are therefore judged against FLOOR, so the
    // oracle's own rounding noise cannot exceed TOL.
    const FLOOR: f64 = f64::EPSILON / H / TOL;
    let start = Instant::now();
    let (hidden, input) = (4, 3);
    let cells = [CellVariant::Lstm, CellVariant::O2rnn(Activation::Sigmoid), CellVariant::Elman];
    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut worst_at = String::new();
    let mut checked = 0;
    for cell in cells {
        for seed in 0..20u64 {
            let model: Model<f64> = initialize(cell, hidden, input, InitStrategy::Default, seed).unwrap();
            let mut rng = rng_from_seed(1000 + seed);
            let batch: Vec<LabeledString> = (0..4)
                .map(|_| {
                    let len = rng.random_range(1..=8);
                    LabeledString {
                        word: (0..len).map(|_| rng.random_range(0..input as Symbol)).collect(),
                        label: rng.random(),
                        provenance: Provenance::PositiveSample,
                    }
                })
                .collect();
            let analytic = bptt_gradients(&model, &batch, Freeze::None).unwrap();
            let mut params: Params = model
                .tensors()
                .into_iter()
                .map(|(n, t)| (n, t.data().to_vec()))
                .collect();
            for (name, g) in analytic.tensors() {
                for i in 0..g.len() {
                    let orig = params[&name][i];
                    params.get_mut(&name).unwrap()[i] = orig + H;
                    let up = oracle_loss(cell, hidden, input, &params, &batch);
                    params.get_mut(&name).unwrap()[i] = orig - H;
                    let down = oracle_loss(cell, hidden, input, &params, &batch);
                    params.get_mut(&name).unwrap()[i] = orig;
                    let fd = (up - down) / (2.0 * H);
                    let a = g.data()[i];
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(FLOOR);
                    checked += 1;
                    worst_abs = worst_abs.max((a - fd).abs());
                    if rel > worst {
                        worst = rel;
                        worst_at = format!("{cell} seed {seed} {name}[{i}]");
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst < TOL && secs < 60.0;
    report(
        2,
        "gradient-fidelity",
        ok,
        &format!(
            "max relative error {worst:.2e} (limit 1e-4, floor {FLOOR:.1e}) at {worst_at}; \
             max absolute error {worst_abs:.1e}; {checked} components; {secs:.1}s"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 3. fixed-point regions

#[test]
fn c3_fixed_point_regions() {
    let start = Instant::now();
    let bs = grid_points(-8.0, -4.0, 0.25).unwrap();
    let mut ok = bs.len() == 17;
    let mut bad = Vec::new();
    for kind in [Activation::Tanh, Activation::Sigmoid] {
        for cell in count_region_sweep(kind, &[5.0, 13.0], &bs) {
            let want = if cell.w == 13.0 { 3 } else { 1 };
            let mut good = cell.count == want;
            if cell.count == 3 {
                let r = find_fixed_points(ActivationParams::new(kind, cell.w, cell.b).unwrap());
                good &= r.stabilities() == [Stability::Stable, Stability::Unstable, Stability::Stable];
            }
            if !good {
                bad.push(format!("{kind} w={} b={} count {}", cell.w, cell.b, cell.count));
            }
        }
    }
    ok &= bad.is_empty();
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 5.0;
    report(
        3,
        "fixed-point-regions",
        ok,
        &format!("{} cells per activation, {} wrong {:?}; {secs:.2}s (limit 5s)", 2 * bs.len(), bad.len(), bad),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 4. hard-1 edit budget

#[test]
fn c4_hard1_edit_bound() {
    let g: Grammar = "anbncn".parse().unwrap();
    let range = LengthRange::new(8, 40).unwrap();
    let mut rng = rng_from_seed(44);
    let n = 10_000;
    let (mut over, mut members, mut outside) = (0, 0, 0);
    for _ in 0..n {
        let target = rng.random_range(8..=40);
        let p = sample_negative_hard1(&g, target, range, &mut rng).unwrap();
        let d = edit_distance(&p.sample.word, &p.source);
        // floor(0.25 l) against both the source and the negative length
        let l = p.source.len().min(p.sample.word.len());
        if d == 0 || 4 * d > l {
            over += 1;
        }
        members += usize::from(is_member(&g, &p.sample.word).unwrap());
        outside += usize::from(!range.contains(p.sample.word.len()));
    }
    let ok = over == 0 && members == 0 && outside == 0;
    report(
        4,
        "hard1-edit-bound",
        ok,
        &format!("{over}/{n} over budget, {members} members, {outside} outside 8..40"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// training helpers

fn desk(grammar: &str, hardness: Hardness, cell: CellVariant, freeze: Freeze) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.grammar = grammar.parse().unwrap();
    cfg.hardness = hardness;
    cfg.cell = cell;
    cfg.freeze = freeze;
    cfg
}

fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> (ExperimentResult, f64) {
    let start = Instant::now();
    let opts = RunOptions {
        jobs: 1,
        out_dir: out.map(Path::to_path_buf),
    };
    let r = run_experiment(cfg, &opts).unwrap();
    (r, start.elapsed().as_secs_f64())
}

fn per_seed(r: &ExperimentResult) -> String {
    r.summary
        .per_seed_accuracy
        .iter()
        .map(|a| format!("{a:.2}"))
        .collect::<Vec<_>>()
        .join("/")
}

// ---------------------------------------------------------------------------
// 5. desk-scale learnability on Dyck-1

#[test]
fn c5_desk_learnability() {
    let full = desk("dyck1", Hardness::Hard0, CellVariant::Lstm, Freeze::None);
    let frozen = desk("dyck1", Hardness::Hard0, CellVariant::Lstm, Freeze::RecurrentFrozen);
    let (rf, tf) = run(&full, None);
    let (rc, tc) = run(&frozen, None);
    let best_full = rf.best_accuracy_between(41, 100).unwrap_or(0.0);
    let best_frozen = rc.best_accuracy_between(41, 100).unwrap_or(0.0);
    let per_seed_secs = (tf / full.seeds.len() as f64).max(tc / frozen.seeds.len() as f64);
    let ok = best_full >= 85.0 && best_frozen >= 55.0 && per_seed_secs <= 1800.0;
    report(
        5,
        "desk-learnability",
        ok,
        &format!(
            "lengths 41-100 best seed: all layers {best_full:.2}% (need 85), classifier only {best_frozen:.2}% (need 55); \
             {per_seed_secs:.0}s per seed (limit 1800s)"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 6. hard 0 vs hard 2 ordering on a^n b^n c^n

#[test]
fn c6_hardness_ordering() {
    let mut ok = true;
    let mut parts = Vec::new();
    for cell in [CellVariant::Lstm, CellVariant::O2rnn(Activation::Sigmoid)] {
        let (r0, _) = run(&desk("anbncn", Hardness::Hard0, cell, Freeze::None), None);
        let (r2, _) = run(&desk("anbncn", Hardness::Hard2, cell, Freeze::None), None);
        let gap = r0.summary.mean - r2.summary.mean;
        ok &= gap >= 5.0;
        parts.push(format!(
            "{cell} hard0 mean {:.2} [{}] vs hard2 mean {:.2} [{}], gap {gap:.2}",
            r0.summary.mean,
            per_seed(&r0),
            r2.summary.mean,
            per_seed(&r2)
        ));
    }
    report(6, "hardness-ordering", ok, &format!("{} (need gap >= 5)", parts.join("; ")));
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 7. precision estimate

#[test]
fn c7_precision_report() {
    let r = estimate_nmax(&PrecisionParams::rounded_f32()).unwrap();
    let expect = 1.8 / 1.19e-6;
    let six = |x: f64| format!("{x:.5e}");
    let ok = r.delta_h_min == 1.19e-6 && r.dynamic_range == 1.8 && six(r.n_max) == six(expect);
    report(
        7,
        "precision-report",
        ok,
        &format!(
            "delta_h_min {} range {} n_max {} (expected {})",
            r.delta_h_min,
            r.dynamic_range,
            six(r.n_max),
            six(expect)
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 8. determinism of emitted CSVs

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn c8_determinism() {
    let mut ok = true;
    let mut parts = Vec::new();
    let o2 = desk("anbncn", Hardness::Hard2, CellVariant::O2rnn(Activation::Sigmoid), Freeze::None);
    let mut small = desk("dyck1", Hardness::Hard1, CellVariant::Lstm, Freeze::None);
    small.width = FloatWidth::F32;
    small.max_iters = 1500;
    small.train_size = 1000;
    for cfg in [o2, small] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run(&cfg, Some(a.path()));
        run(&cfg, Some(b.path()));
        let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
        let same = !fa.is_empty() && fa == fb;
        ok &= same;
        parts.push(format!(
            "{} {} {} {}: {} CSV files {}",
            cfg.grammar,
            cfg.hardness,
            cfg.cell,
            cfg.width,
            fa.len(),
            if same { "identical" } else { "differ" }
        ));
    }
    report(8, "determinism", ok, &parts.join("; "));
    assert!(ok);
}

// ---------------------------------------------------------------------------
// 9. seed-to-seed spread on hard 1, reported only

#[test]
fn c9_stability_comparison() {
    let (rl, _) = run(&desk("anbncn", Hardness::Hard1, CellVariant::Lstm, Freeze::None), None);
    let (ro, _) = run(&desk("anbncn", Hardness::Hard1, CellVariant::O2rnn(Activation::Sigmoid), Freeze::None), None);
    let holds = ro.summary.std <= rl.summary.std;
    info(
        9,
        "stability-comparison",
        &format!(
            "std over seeds: o2rnn {:.2} [{}] vs lstm {:.2} [{}]; o2rnn <= lstm {}",
            ro.summary.std,
            per_seed(&ro),
            rl.summary.std,
            per_seed(&rl),
            if holds { "holds" } else { "does not hold" }
        ),
    );
}
