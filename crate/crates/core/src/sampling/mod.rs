//! Labeled dataset construction: length distribution, positive generation,
//! and the three negative-sampling regimes.

mod io;
mod negatives;

pub use io::{read_dataset, read_dataset_spec, sidecar_path, write_dataset, DatasetRow};
pub use negatives::{
    hard1_edit_budget, perturb_counter_blocks, perturb_dyck, sample_negative_hard0, sample_negative_hard1,
    sample_negative_hard2, swap_close_types, Perturbed,
};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{expand_template, is_member, Family, Grammar, Symbol};

pub type SampleRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hardness {
    Hard0,
    Hard1,
    Hard2,
}

impl fmt::Display for Hardness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hardness::Hard0 => "hard0",
            Hardness::Hard1 => "hard1",
            Hardness::Hard2 => "hard2",
        })
    }
}

impl FromStr for Hardness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace([' ', '-', '_'], "").as_str() {
            "hard0" | "0" => Ok(Hardness::Hard0),
            "hard1" | "1" => Ok(Hardness::Hard1),
            "hard2" | "2" => Ok(Hardness::Hard2),
            _ => Err(Error::Parse(format!("unknown hardness '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    PositiveSample,
    Hard0,
    Hard1 { edits: usize },
    Hard2(String),
}

impl Provenance {
    pub fn tag(&self) -> String {
        match self {
            Provenance::PositiveSample => "positive".into(),
            Provenance::Hard0 => "hard0".into(),
            Provenance::Hard1 { edits } => format!("hard1:edits={edits}"),
            Provenance::Hard2(desc) => format!("hard2:{desc}"),
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag.split_once(':') {
            None if tag == "positive" => Provenance::PositiveSample,
            None if tag == "hard0" => Provenance::Hard0,
            Some(("hard1", rest)) => Provenance::Hard1 {
                edits: rest
                    .strip_prefix("edits=")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad provenance '{tag}'")))?,
            },
            Some(("hard2", rest)) => Provenance::Hard2(rest.to_string()),
            _ => return Err(Error::Parse(format!("bad provenance '{tag}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledString {
    pub word: Vec<Symbol>,
    pub label: bool,
    pub provenance: Provenance,
}

impl LabeledString {
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }
}

/// Inclusive range of word lengths a sampler may emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

impl LengthRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min == 0 || min > max {
            return Err(Error::Config(format!("length range [{min}, {max}] needs 1 <= min <= max")));
        }
        Ok(LengthRange { min, max })
    }

    pub fn contains(&self, len: usize) -> bool {
        (self.min..=self.max).contains(&len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub grammar: Grammar,
    pub hardness: Hardness,
    pub len_min: usize,
    pub len_max: usize,
    pub size: usize,
    pub length_decay: f64,
    pub seed: u64,
    /// Upper bound on copies of any one (word, label) pair; `None` is unbounded.
    #[serde(default)]
    pub max_duplicates: Option<usize>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        LengthRange::new(self.len_min, self.len_max)?;
        if self.size % 2 != 0 {
            return Err(Error::Config(format!("dataset size {} must be even", self.size)));
        }
        if !(self.length_decay >= 0.0 && self.length_decay.is_finite()) {
            return Err(Error::Config(format!("length decay {} must be >= 0", self.length_decay)));
        }
        if self.max_duplicates == Some(0) {
            return Err(Error::Config("max_duplicates must be at least 1".into()));
        }
        Ok(())
    }

    pub fn range(&self) -> LengthRange {
        LengthRange {
            min: self.len_min,
            max: self.len_max,
        }
    }
}

/// Draws lengths with P(l) ∝ exp(−λ·l) over an inclusive range.
#[derive(Debug, Clone)]
pub struct LengthSampler {
    min: usize,
    index: WeightedIndex<f64>,
}

impl LengthSampler {
    pub fn new(range: LengthRange, decay: f64) -> Result<Self> {
        if !(decay >= 0.0 && decay.is_finite()) {
            return Err(Error::Config(format!("length decay {decay} must be >= 0")));
        }
        // Weights are shifted by the range minimum so the largest is 1.
        let weights = (range.min..=range.max).map(|l| (-decay * (l - range.min) as f64).exp());
        let index = WeightedIndex::new(weights)
            .map_err(|e| Error::Config(format!("length weights: {e}")))?;
        Ok(LengthSampler {
            min: range.min,
            index,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.min + self.index.sample(rng)
    }
}

pub fn sample_length<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> Result<usize> {
    Ok(LengthSampler::new(spec.range(), spec.length_decay)?.sample(rng))
}

/// Length of the member that a request for `target` resolves to: the
/// shortest feasible length at or above `target`, else the longest below it.
pub fn feasible_length(g: &Grammar, target: usize, range: LengthRange) -> Result<usize> {
    let target = target.clamp(range.min, range.max);
    (target..=range.max)
        .find(|&l| g.has_member_of_length(l))
        .or_else(|| (range.min..target).rev().find(|&l| g.has_member_of_length(l)))
        .filter(|&l| l > 0)
        .ok_or_else(|| Error::NoFeasibleLength {
            grammar: g.name(),
            min: range.min,
            max: range.max,
        })
}

/// A uniformly random member whose length is the feasible length nearest
/// to `target` (see [`feasible_length`]).
pub fn sample_positive<R: Rng + ?Sized>(
    g: &Grammar,
    target: usize,
    range: LengthRange,
    rng: &mut R,
) -> Result<Vec<Symbol>> {
    let len = feasible_length(g, target, range)?;
    Ok(match g.family() {
        Family::Dyck(k) => random_dyck(k, len, rng),
        _ => {
            let exps = random_exponents(g, len, rng);
            expand_template(g.template().expect("counter family"), &exps)
        }
    })
}

/// Uniform Dyck-k word of even length `len`.
///
/// Shapes are drawn uniformly with the ballot rule: with `r` symbols left
/// at height `h`, the next symbol opens with probability
/// (r − h)(h + 2) / (2r(h + 1)). Every shape has the same number of
/// bracket typings, so typing each opener uniformly keeps the word uniform.
fn random_dyck<R: Rng + ?Sized>(k: u8, len: usize, rng: &mut R) -> Vec<Symbol> {
    debug_assert!(len % 2 == 0);
    let mut word = Vec::with_capacity(len);
    let mut stack: Vec<Symbol> = Vec::with_capacity(len / 2);
    for pos in 0..len {
        let r = (len - pos) as f64;
        let h = stack.len() as f64;
        let p_open = (r - h) * (h + 2.0) / (2.0 * r * (h + 1.0));
        if rng.random::<f64>() < p_open {
            let open = 2 * rng.random_range(0..k);
            stack.push(open);
            word.push(open);
        } else {
            let open = stack.pop().expect("ballot rule keeps height positive");
            word.push(open + 1);
        }
    }
    word
}

/// Exponent values (`n` or `n, m`) of a uniformly chosen member of length `len`.
fn random_exponents<R: Rng + ?Sized>(g: &Grammar, len: usize, rng: &mut R) -> Vec<usize> {
    match g.family() {
        Family::AnBnCn => vec![len / 3],
        Family::AnBnCnDn => vec![len / 4],
        Family::AnBmAmBn => {
            // 2n + 2m = len
            let half = len / 2;
            let n = rng.random_range(1..half);
            vec![n, half - n]
        }
        Family::AnBmAmBm => {
            // n + 3m = len
            let m = rng.random_range(1..=(len - 1) / 3);
            vec![len - 3 * m, m]
        }
        Family::Dyck(_) => unreachable!("Dyck words have no exponents"),
    }
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance(a: &[Symbol], b: &[Symbol]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Length resamples allowed per row before a sampler error is propagated.
const LENGTH_REDRAWS: usize = 1000;

pub fn build_dataset(spec: &DatasetSpec) -> Result<Vec<LabeledString>> {
    spec.validate()?;
    let g = &spec.grammar;
    let range = spec.range();
    let lengths = LengthSampler::new(range, spec.length_decay)?;
    let mut rng = rng_from_seed(spec.seed);
    let half = spec.size / 2;
    let mut counts: HashMap<(Vec<Symbol>, bool), usize> = HashMap::new();
    let mut rows = Vec::with_capacity(spec.size);

    for label in [true, false] {
        let mut emitted = 0;
        while emitted < half {
            let mut attempt = 0;
            let row = loop {
                let target = lengths.sample(&mut rng);
                let drawn = if label {
                    sample_positive(g, target, range, &mut rng).map(|word| LabeledString {
                        word,
                        label: true,
                        provenance: Provenance::PositiveSample,
                    })
                } else {
                    match spec.hardness {
                        Hardness::Hard0 => sample_negative_hard0(g, target, &mut rng),
                        Hardness::Hard1 => {
                            sample_negative_hard1(g, target, range, &mut rng).map(|p| p.sample)
                        }
                        Hardness::Hard2 => {
                            sample_negative_hard2(g, target, range, &mut rng).map(|p| p.sample)
                        }
                    }
                };
                attempt += 1;
                match drawn {
                    Ok(row) => {
                        let seen = counts.get(&(row.word.clone(), row.label)).copied().unwrap_or(0);
                        if spec.max_duplicates.is_none_or(|cap| seen < cap) {
                            break row;
                        }
                        if attempt >= LENGTH_REDRAWS {
                            return Err(Error::RejectionBudgetExceeded {
                                attempts: attempt,
                                what: "distinct rows under the duplicate cap".into(),
                            });
                        }
                    }
                    Err(Error::NoValidPerturbation { .. } | Error::NoFeasibleLength { .. })
                        if attempt < LENGTH_REDRAWS => {}
                    Err(e) => return Err(e),
                }
            };
            *counts.entry((row.word.clone(), row.label)).or_default() += 1;
            rows.push(row);
            emitted += 1;
        }
    }
    rows.shuffle(&mut rng);
    Ok(rows)
}

/// Checks that every row's label agrees with the membership oracle.
pub fn validate_labels(g: &Grammar, rows: &[LabeledString]) -> Result<()> {
    for row in rows {
        if is_member(g, &row.word)? != row.label {
            return Err(Error::Config(format!(
                "label mismatch for '{}' (label {})",
                g.render(&row.word),
                row.label
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{all_words, enumerate_members};

    fn g(s: &str) -> Grammar {
        s.parse().unwrap()
    }

    fn spec(grammar: &str, hardness: Hardness, size: usize, seed: u64) -> DatasetSpec {
        DatasetSpec {
            grammar: g(grammar),
            hardness,
            len_min: 2,
            len_max: 40,
            size,
            length_decay: 0.1,
            seed,
            max_duplicates: None,
        }
    }

    #[test]
    fn length_degenerate_cases() {
        let mut rng = rng_from_seed(1);
        let fixed = LengthSampler::new(LengthRange::new(7, 7).unwrap(), 0.1).unwrap();
        assert!((0..100).all(|_| fixed.sample(&mut rng) == 7));

        // λ = 0 is uniform
        let uni = LengthSampler::new(LengthRange::new(2, 5).unwrap(), 0.0).unwrap();
        let mut hist = [0usize; 4];
        for _ in 0..40_000 {
            hist[uni.sample(&mut rng) - 2] += 1;
        }
        for h in hist {
            assert!((h as f64 / 10_000.0 - 1.0).abs() < 0.05, "{hist:?}");
        }
        assert!(LengthSampler::new(LengthRange::new(2, 5).unwrap(), -1.0).is_err());
        assert!(LengthRange::new(0, 5).is_err());
        assert!(LengthRange::new(6, 5).is_err());
    }

    #[test]
    fn length_frequency_ratio_matches_exponential() {
        let sampler = LengthSampler::new(LengthRange::new(2, 40).unwrap(), 0.1).unwrap();
        let mut rng = rng_from_seed(99);
        let mut hist = vec![0usize; 41];
        let draws = 1_000_000;
        for _ in 0..draws {
            hist[sampler.sample(&mut rng)] += 1;
        }
        // Analytic normalization: P(l) = e^{-0.1 l} / Σ_{j=2}^{40} e^{-0.1 j}.
        let z: f64 = (2..=40).map(|j| (-0.1 * j as f64).exp()).sum();
        let p2 = (-0.2f64).exp() / z;
        let p40 = (-4.0f64).exp() / z;
        let f2 = hist[2] as f64 / draws as f64;
        let f40 = hist[40] as f64 / draws as f64;
        assert!((f2 / p2 - 1.0).abs() < 0.01, "{f2} vs {p2}");
        // l = 40 has ~1.4k expected hits; ±5% on the ratio covers the noise
        let ratio = hist[2] as f64 / hist[40] as f64;
        assert!((ratio / 3.8f64.exp() - 1.0).abs() < 0.05, "{ratio}");
        assert!((f40 / p40 - 1.0).abs() < 0.1);
    }

    #[test]
    fn positive_examples() {
        let mut rng = rng_from_seed(3);
        let r = LengthRange::new(2, 40).unwrap();
        let c = g("anbncn");
        assert_eq!(c.render(&sample_positive(&c, 6, r, &mut rng).unwrap()), "aabbcc");
        // 7 rounds up to 9
        assert_eq!(sample_positive(&c, 7, r, &mut rng).unwrap().len(), 9);
        // 40 has no feasible length at or above it within the range
        assert_eq!(sample_positive(&c, 40, r, &mut rng).unwrap().len(), 39);

        let m = g("anbmambn");
        for _ in 0..200 {
            let w = sample_positive(&m, 8, r, &mut rng).unwrap();
            let rl = crate::grammar::runs(&w);
            assert_eq!(rl.len(), 4);
            assert_eq!(rl[0].1 + rl[1].1, 4);
            assert!(rl[0].1 >= 1 && rl[1].1 >= 1);
            assert!(is_member(&m, &w).unwrap());
        }
        let bad = LengthRange::new(4, 5).unwrap();
        assert!(matches!(
            sample_positive(&c, 4, bad, &mut rng),
            Err(Error::NoFeasibleLength { .. })
        ));
    }

    #[test]
    fn dyck1_len4_split_is_even() {
        let d = g("dyck1");
        let r = LengthRange::new(2, 40).unwrap();
        let mut rng = rng_from_seed(5);
        let draws = 100_000;
        let nested = (0..draws)
            .filter(|_| d.render(&sample_positive(&d, 4, r, &mut rng).unwrap()) == "(())")
            .count();
        assert!((nested as f64 / draws as f64 - 0.5).abs() < 0.02);
    }

    /// Number of Dyck-k words of length 2n via the Catalan recursion
    /// D(n) = k · Σ_{i<n} D(i) D(n−1−i).
    fn dyck_count(k: u64, n: usize) -> u64 {
        let mut d = vec![1u64; n + 1];
        for m in 1..=n {
            d[m] = k * (0..m).map(|i| d[i] * d[m - 1 - i]).sum::<u64>();
        }
        d[n]
    }

    #[test]
    fn dyck_sampling_is_uniform() {
        let r = LengthRange::new(2, 40).unwrap();
        for (k, len) in [(1u8, 8usize), (2, 6)] {
            let d = Grammar::dyck(k).unwrap();
            let members = enumerate_members(&d, len);
            let words: Vec<_> = members.iter().filter(|w| w.len() == len).collect();
            assert_eq!(words.len() as u64, dyck_count(k as u64, len / 2));
            let mut rng = rng_from_seed(11);
            let mut hist: HashMap<Vec<Symbol>, usize> = HashMap::new();
            let draws = 60_000;
            for _ in 0..draws {
                *hist.entry(sample_positive(&d, len, r, &mut rng).unwrap()).or_default() += 1;
            }
            assert_eq!(hist.len(), words.len());
            let expect = draws as f64 / words.len() as f64;
            for w in words {
                let got = hist[w] as f64;
                assert!((got / expect - 1.0).abs() < 0.12, "k={k} {} {got} vs {expect}", d.render(w));
            }
        }
    }

    /// Exhaustive search over edit scripts, breadth first.
    fn brute_edit_distance(a: &[Symbol], b: &[Symbol], alphabet: Symbol) -> usize {
        use std::collections::{HashSet, VecDeque};
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([(a.to_vec(), 0)]);
        seen.insert(a.to_vec());
        while let Some((w, d)) = queue.pop_front() {
            if w == b {
                return d;
            }
            let mut next = Vec::new();
            for i in 0..=w.len() {
                for s in 0..alphabet {
                    let mut x = w.clone();
                    x.insert(i, s);
                    next.push(x);
                }
            }
            for i in 0..w.len() {
                let mut x = w.clone();
                x.remove(i);
                next.push(x);
                for s in 0..alphabet {
                    let mut x = w.clone();
                    x[i] = s;
                    next.push(x);
                }
            }
            for x in next {
                if x.len() <= a.len().max(b.len()) + 1 && seen.insert(x.clone()) {
                    queue.push_back((x, d + 1));
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn edit_distance_examples() {
        let ab = g("anbmambn");
        let w = |s: &str| ab.parse_word(s).unwrap();
        let abc = g("anbncn").parse_word("abc").unwrap();
        assert_eq!(edit_distance(&abc, &abc), 0);
        assert_eq!(brute_edit_distance(&w("ab"), &w("ba"), 2), 2);
        assert_eq!(edit_distance(&w("ab"), &w("ba")), 2);
        assert_eq!(brute_edit_distance(&w("aabb"), &w("abab"), 2), 2);
        assert_eq!(edit_distance(&w("aabb"), &w("abab")), 2);
        assert_eq!(edit_distance(&w(""), &w("abab")), 4);
    }

    #[test]
    fn edit_distance_matches_brute_force_on_short_words() {
        let words: Vec<_> = (0..=4).flat_map(|l| all_words(2, l)).collect();
        for a in words.iter().step_by(3) {
            for b in words.iter().step_by(5) {
                assert_eq!(edit_distance(a, b), brute_edit_distance(a, b, 2));
            }
        }
        // a few length-6 pairs over three letters
        let six: Vec<_> = all_words(3, 6).step_by(97).collect();
        for pair in six.windows(2) {
            assert_eq!(edit_distance(&pair[0], &pair[1]), brute_edit_distance(&pair[0], &pair[1], 3));
        }
    }

    #[test]
    fn dataset_balance_and_determinism() {
        let s = spec("dyck2", Hardness::Hard1, 1000, 7);
        let a = build_dataset(&s).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(a.iter().filter(|r| r.label).count(), 500);
        assert_eq!(a, build_dataset(&s).unwrap());
        assert_ne!(a, build_dataset(&DatasetSpec { seed: 8, ..s.clone() }).unwrap());
        validate_labels(&s.grammar, &a).unwrap();
    }

    #[test]
    fn dataset_hard2_counter_family_full_pass() {
        let s = spec("anbncn", Hardness::Hard2, 2000, 21);
        let rows = build_dataset(&s).unwrap();
        assert!(rows.iter().all(|r| (2..=40).contains(&r.len())));
        validate_labels(&s.grammar, &rows).unwrap();
        assert!(rows.iter().filter(|r| !r.label).all(|r| r.provenance != Provenance::PositiveSample));
    }

    #[test]
    fn duplicate_cap_is_enforced() {
        let mut s = spec("dyck1", Hardness::Hard0, 200, 4);
        s.max_duplicates = Some(2);
        let rows = build_dataset(&s).unwrap();
        let mut counts: HashMap<(Vec<Symbol>, bool), usize> = HashMap::new();
        for r in &rows {
            *counts.entry((r.word.clone(), r.label)).or_default() += 1;
        }
        assert!(counts.values().all(|&c| c <= 2));
        // a^n b^n c^n has 13 members in [2, 40]; 100 positives cannot fit under cap 2
        let mut s = spec("anbncn", Hardness::Hard0, 200, 4);
        s.max_duplicates = Some(2);
        assert!(matches!(build_dataset(&s), Err(Error::RejectionBudgetExceeded { .. })));
    }

    #[test]
    fn spec_validation() {
        assert!(spec("dyck1", Hardness::Hard0, 11, 0).validate().is_err());
        let mut s = spec("dyck1", Hardness::Hard0, 10, 0);
        s.len_min = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn provenance_tags_round_trip() {
        for p in [
            Provenance::PositiveSample,
            Provenance::Hard0,
            Provenance::Hard1 { edits: 3 },
            Provenance::Hard2("block0-1,block1+1".into()),
        ] {
            assert_eq!(Provenance::from_tag(&p.tag()).unwrap(), p);
        }
        assert!(Provenance::from_tag("hard1:x").is_err());
    }
}
