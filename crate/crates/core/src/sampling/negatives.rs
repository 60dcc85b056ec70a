use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{edit_distance, sample_positive, LabeledString, LengthRange, Provenance};
use crate::error::{Error, Result};
use crate::grammar::{expand_template, is_member, runs, Grammar, Symbol};

const HARD0_ATTEMPTS: usize = 10_000;
const HARD1_ATTEMPTS: usize = 1_000;
const DYCK_PERTURB_ATTEMPTS: usize = 1_000;

/// A negative together with the positive it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Perturbed {
    pub sample: LabeledString,
    pub source: Vec<Symbol>,
}

/// Uniform random non-member of exactly `len` symbols.
pub fn sample_negative_hard0<R: Rng + ?Sized>(
    g: &Grammar,
    len: usize,
    rng: &mut R,
) -> Result<LabeledString> {
    let k = g.alphabet_size() as Symbol;
    for _ in 0..HARD0_ATTEMPTS {
        let word: Vec<Symbol> = (0..len).map(|_| rng.random_range(0..k)).collect();
        if !is_member(g, &word)? {
            return Ok(LabeledString {
                word,
                label: false,
                provenance: Provenance::Hard0,
            });
        }
    }
    Err(Error::RejectionBudgetExceeded {
        attempts: HARD0_ATTEMPTS,
        what: format!("random non-member of {g} with length {len}"),
    })
}

/// Maximum number of edits allowed for a source positive of length `len`.
///
/// Words shorter than four symbols still get one edit.
pub fn hard1_edit_budget(len: usize) -> usize {
    (len / 4).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edit {
    Insert,
    Delete,
    Substitute,
}

fn apply_random_edit<R: Rng + ?Sized>(
    word: &mut Vec<Symbol>,
    alphabet: Symbol,
    range: LengthRange,
    rng: &mut R,
) {
    let mut allowed = Vec::with_capacity(3);
    if word.len() < range.max {
        allowed.push(Edit::Insert);
    }
    if word.len() > range.min {
        allowed.push(Edit::Delete);
    }
    if !word.is_empty() && alphabet > 1 {
        allowed.push(Edit::Substitute);
    }
    match allowed.choose(rng) {
        Some(Edit::Insert) => {
            let at = rng.random_range(0..=word.len());
            word.insert(at, rng.random_range(0..alphabet));
        }
        Some(Edit::Delete) => {
            let at = rng.random_range(0..word.len());
            word.remove(at);
        }
        Some(Edit::Substitute) => {
            let at = rng.random_range(0..word.len());
            // shift by a non-zero offset so the symbol always changes
            let offset = rng.random_range(1..alphabet);
            word[at] = (word[at] + offset) % alphabet;
        }
        None => {}
    }
}

/// Negative obtained by applying 1..=budget random single-symbol edits to a
/// freshly drawn positive, keeping lengths inside `range`.
pub fn sample_negative_hard1<R: Rng + ?Sized>(
    g: &Grammar,
    target: usize,
    range: LengthRange,
    rng: &mut R,
) -> Result<Perturbed> {
    let alphabet = g.alphabet_size() as Symbol;
    for _ in 0..HARD1_ATTEMPTS {
        let source = sample_positive(g, target, range, rng)?;
        let edits = rng.random_range(1..=hard1_edit_budget(source.len()));
        let mut word = source.clone();
        for _ in 0..edits {
            apply_random_edit(&mut word, alphabet, range, rng);
        }
        // the budget must also hold relative to the (possibly shorter) negative
        let within = edit_distance(&word, &source) <= hard1_edit_budget(word.len().min(source.len()));
        if word != source && within && !is_member(g, &word)? {
            return Ok(Perturbed {
                sample: LabeledString {
                    word,
                    label: false,
                    provenance: Provenance::Hard1 { edits },
                },
                source,
            });
        }
    }
    Err(Error::RejectionBudgetExceeded {
        attempts: HARD1_ATTEMPTS,
        what: format!("edit-distance negative of {g} near length {target}"),
    })
}

/// Structure-preserving negative: exponent blocks shifted by one for counter
/// families, bracket corruption for Dyck-k.
pub fn sample_negative_hard2<R: Rng + ?Sized>(
    g: &Grammar,
    target: usize,
    range: LengthRange,
    rng: &mut R,
) -> Result<Perturbed> {
    let source = sample_positive(g, target, range, rng)?;
    let (word, desc) = if g.is_dyck() {
        perturb_dyck(g, &source, rng)?
    } else {
        perturb_counter_blocks(g, &source, range, rng)?
    };
    Ok(Perturbed {
        sample: LabeledString {
            word,
            label: false,
            provenance: Provenance::Hard2(desc),
        },
        source,
    })
}

/// Moves one symbol from one exponent block to another (length preserved),
/// falling back to growing or shrinking a single block by one. Every block
/// keeps at least one symbol, so the block ordering of the family survives.
pub fn perturb_counter_blocks<R: Rng + ?Sized>(
    g: &Grammar,
    positive: &[Symbol],
    range: LengthRange,
    rng: &mut R,
) -> Result<(Vec<Symbol>, String)> {
    let template = g.template().ok_or_else(|| Error::Unsupported("not a counter family".into()))?;
    let sizes: Vec<usize> = runs(positive).into_iter().map(|(_, n)| n).collect();
    if sizes.len() != template.len() {
        return Err(Error::NoValidPerturbation { len: positive.len() });
    }
    // Blocks reuse exponent slots positionally so expand_template can render them.
    let blocks: Vec<_> = template
        .iter()
        .enumerate()
        .map(|(i, b)| crate::grammar::Block {
            symbol: b.symbol,
            exponent: i,
        })
        .collect();
    let render = |sizes: &[usize]| expand_template(&blocks, sizes);

    let mut pairs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|i| (0..sizes.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    pairs.shuffle(rng);
    for (from, to) in pairs {
        if sizes[from] < 2 {
            continue;
        }
        let mut s = sizes.clone();
        s[from] -= 1;
        s[to] += 1;
        let word = render(&s);
        if !is_member(g, &word)? {
            return Ok((word, format!("block{from}-1,block{to}+1")));
        }
    }

    let mut singles: Vec<(usize, bool)> = (0..sizes.len()).flat_map(|i| [(i, true), (i, false)]).collect();
    singles.shuffle(rng);
    for (block, grow) in singles {
        let mut s = sizes.clone();
        if grow {
            s[block] += 1;
        } else if s[block] >= 2 {
            s[block] -= 1;
        } else {
            continue;
        }
        let word = render(&s);
        if range.contains(word.len()) && !is_member(g, &word)? {
            let sign = if grow { '+' } else { '-' };
            return Ok((word, format!("block{block}{sign}1")));
        }
    }
    Err(Error::NoValidPerturbation { len: positive.len() })
}

/// Swaps the first pair of closing brackets of different types.
pub fn swap_close_types(word: &[Symbol]) -> Option<Vec<Symbol>> {
    let closes: Vec<usize> = (0..word.len()).filter(|&i| word[i] % 2 == 1).collect();
    for (a, &i) in closes.iter().enumerate() {
        if let Some(&j) = closes[a + 1..].iter().find(|&&j| word[j] != word[i]) {
            let mut out = word.to_vec();
            out.swap(i, j);
            return Some(out);
        }
    }
    None
}

#[derive(Debug, Clone, Copy)]
enum DyckMove {
    SwapCloses,
    Retype,
    Transpose,
}

/// Length-preserving Dyck corruption: swap two closers of different types,
/// retype one closer, or exchange an opener with a later closer (adjacent
/// pairs are tried first).
pub fn perturb_dyck<R: Rng + ?Sized>(
    g: &Grammar,
    positive: &[Symbol],
    rng: &mut R,
) -> Result<(Vec<Symbol>, String)> {
    let k = g.dyck_pairs().ok_or_else(|| Error::Unsupported("not a Dyck language".into()))?;
    let opens: Vec<usize> = (0..positive.len()).filter(|&i| positive[i] % 2 == 0).collect();
    let closes: Vec<usize> = (0..positive.len()).filter(|&i| positive[i] % 2 == 1).collect();
    if opens.is_empty() {
        return Err(Error::NoValidPerturbation { len: positive.len() });
    }
    let moves: &[DyckMove] = if k >= 2 {
        &[DyckMove::SwapCloses, DyckMove::Retype, DyckMove::Transpose]
    } else {
        &[DyckMove::Transpose]
    };
    let adjacent: Vec<usize> = opens
        .iter()
        .copied()
        .filter(|&i| positive.get(i + 1).is_some_and(|s| s % 2 == 1))
        .collect();

    for attempt in 0..DYCK_PERTURB_ATTEMPTS {
        let mut word = positive.to_vec();
        let desc = match moves.choose(rng).copied().expect("non-empty") {
            DyckMove::SwapCloses => {
                let i = *closes.choose(rng).expect("closers exist");
                let j = *closes.choose(rng).expect("closers exist");
                if word[i] == word[j] {
                    continue;
                }
                word.swap(i, j);
                format!("swap-close@{},{}", i.min(j), i.max(j))
            }
            DyckMove::Retype => {
                let i = *closes.choose(rng).expect("closers exist");
                let offset = rng.random_range(1..k);
                word[i] = 2 * ((word[i] / 2 + offset) % k) + 1;
                format!("retype@{i}")
            }
            DyckMove::Transpose => {
                // adjacent pairs first, then arbitrary opener/later-closer pairs
                let (i, j) = if attempt < DYCK_PERTURB_ATTEMPTS / 4 && !adjacent.is_empty() {
                    let i = *adjacent.choose(rng).expect("non-empty");
                    (i, i + 1)
                } else {
                    let i = *opens.choose(rng).expect("non-empty");
                    let later: Vec<usize> = closes.iter().copied().filter(|&j| j > i).collect();
                    (i, *later.choose(rng).expect("every opener has a later closer"))
                };
                word.swap(i, j);
                format!("transpose@{i},{j}")
            }
        };
        if !is_member(g, &word)? {
            return Ok((word, desc));
        }
    }
    Err(Error::NoValidPerturbation { len: positive.len() })
}
