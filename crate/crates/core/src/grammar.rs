//! The eight target languages: Dyck-k and the counter families.
//!
//! Words are sequences of symbol ids. For Dyck-k the ids are `0..2k` with
//! bracket pair `i` encoded as `(2i, 2i + 1)`; for counter families the ids
//! index the letters `a, b, c, d` in order. The empty word is a member of
//! every language. Counter-family words other than the empty word need every
//! exponent to be at least one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Symbol = u8;

/// Opening and closing glyphs used to render Dyck symbols as text.
const BRACKETS: [(char, char); 8] = [
    ('(', ')'),
    ('[', ']'),
    ('{', '}'),
    ('<', '>'),
    ('⌈', '⌉'),
    ('⌊', '⌋'),
    ('⟦', '⟧'),
    ('⟨', '⟩'),
];

pub const MAX_DYCK_PAIRS: u8 = BRACKETS.len() as u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Dyck(u8),
    AnBnCn,
    AnBnCnDn,
    AnBmAmBn,
    AnBmAmBm,
}

/// One block of a counter-family template: a letter repeated `exponent` times,
/// where `exponent` indexes the shared exponent variables (`n`, `m`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub symbol: Symbol,
    pub exponent: usize,
}

const fn b(symbol: Symbol, exponent: usize) -> Block {
    Block { symbol, exponent }
}

const ANBNCN: [Block; 3] = [b(0, 0), b(1, 0), b(2, 0)];
const ANBNCNDN: [Block; 4] = [b(0, 0), b(1, 0), b(2, 0), b(3, 0)];
const ANBMAMBN: [Block; 4] = [b(0, 0), b(1, 1), b(0, 1), b(1, 0)];
const ANBMAMBM: [Block; 4] = [b(0, 0), b(1, 1), b(0, 1), b(1, 1)];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grammar {
    family: Family,
    alphabet: Vec<char>,
}

impl Grammar {
    pub fn new(family: Family) -> Result<Self> {
        let alphabet = match family {
            Family::Dyck(k) => {
                if k == 0 || k > MAX_DYCK_PAIRS {
                    return Err(Error::Unsupported(format!(
                        "Dyck-{k}: pair count must be in 1..={MAX_DYCK_PAIRS}"
                    )));
                }
                BRACKETS[..k as usize]
                    .iter()
                    .flat_map(|&(o, c)| [o, c])
                    .collect()
            }
            Family::AnBnCn => vec!['a', 'b', 'c'],
            Family::AnBnCnDn => vec!['a', 'b', 'c', 'd'],
            Family::AnBmAmBn | Family::AnBmAmBm => vec!['a', 'b'],
        };
        Ok(Grammar { family, alphabet })
    }

    pub fn dyck(k: u8) -> Result<Self> {
        Self::new(Family::Dyck(k))
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_dyck(&self) -> bool {
        matches!(self.family, Family::Dyck(_))
    }

    /// Number of bracket pairs for Dyck-k, `None` for counter families.
    pub fn dyck_pairs(&self) -> Option<u8> {
        match self.family {
            Family::Dyck(k) => Some(k),
            _ => None,
        }
    }

    /// Block template of a counter family, `None` for Dyck-k.
    pub fn template(&self) -> Option<&'static [Block]> {
        match self.family {
            Family::Dyck(_) => None,
            Family::AnBnCn => Some(&ANBNCN),
            Family::AnBnCnDn => Some(&ANBNCNDN),
            Family::AnBmAmBn => Some(&ANBMAMBN),
            Family::AnBmAmBm => Some(&ANBMAMBM),
        }
    }

    /// Number of free exponent variables in the template (`n` or `n, m`).
    pub fn exponent_count(&self) -> usize {
        self.template()
            .map(|t| t.iter().map(|b| b.exponent + 1).max().unwrap_or(0))
            .unwrap_or(0)
    }

    /// Hidden-state size used for this language in the reference experiments.
    pub fn reference_sdim(&self) -> usize {
        match self.family {
            Family::Dyck(k) => 2 * k as usize,
            Family::AnBnCn => 6,
            Family::AnBnCnDn | Family::AnBmAmBn | Family::AnBmAmBm => 8,
        }
    }

    /// Short identifier used in file names and CSV columns.
    pub fn name(&self) -> String {
        match self.family {
            Family::Dyck(k) => format!("dyck{k}"),
            Family::AnBnCn => "anbncn".into(),
            Family::AnBnCnDn => "anbncndn".into(),
            Family::AnBmAmBn => "anbmambn".into(),
            Family::AnBmAmBm => "anbmambm".into(),
        }
    }

    /// Whether a non-empty member of length `len` exists.
    pub fn has_member_of_length(&self, len: usize) -> bool {
        if len == 0 {
            return true;
        }
        match self.family {
            Family::Dyck(_) => len % 2 == 0,
            Family::AnBnCn => len % 3 == 0,
            Family::AnBnCnDn => len % 4 == 0,
            // 2n + 2m with n, m >= 1
            Family::AnBmAmBn => len >= 4 && len % 2 == 0,
            // n + 3m with n, m >= 1
            Family::AnBmAmBm => len >= 4,
        }
    }

    pub fn check_symbols(&self, word: &[Symbol]) -> Result<()> {
        match word.iter().find(|&&s| s as usize >= self.alphabet.len()) {
            Some(&s) => Err(Error::InvalidSymbol {
                symbol: s.to_string(),
                grammar: self.name(),
            }),
            None => Ok(()),
        }
    }

    pub fn render(&self, word: &[Symbol]) -> String {
        word.iter()
            .map(|&s| self.alphabet.get(s as usize).copied().unwrap_or('?'))
            .collect()
    }

    pub fn parse_word(&self, text: &str) -> Result<Vec<Symbol>> {
        text.chars()
            .map(|ch| {
                self.alphabet
                    .iter()
                    .position(|&a| a == ch)
                    .map(|i| i as Symbol)
                    .ok_or_else(|| Error::InvalidSymbol {
                        symbol: ch.to_string(),
                        grammar: self.name(),
                    })
            })
            .collect()
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Grammar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | '^'))
            .collect::<String>()
            .to_ascii_lowercase();
        let family = match key.as_str() {
            "anbncn" => Family::AnBnCn,
            "anbncndn" => Family::AnBnCnDn,
            "anbmambn" => Family::AnBmAmBn,
            "anbmambm" => Family::AnBmAmBm,
            _ => match key.strip_prefix("dyck").map(str::parse::<u8>) {
                Some(Ok(k)) => Family::Dyck(k),
                _ => return Err(Error::Parse(format!("unknown grammar '{s}'"))),
            },
        };
        Grammar::new(family)
    }
}

impl Serialize for Grammar {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Grammar {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Run-length encoding of a word as `(symbol, count)` pairs.
pub fn runs(word: &[Symbol]) -> Vec<(Symbol, usize)> {
    let mut out: Vec<(Symbol, usize)> = Vec::new();
    for &s in word {
        match out.last_mut() {
            Some((last, n)) if *last == s => *n += 1,
            _ => out.push((s, 1)),
        }
    }
    out
}

pub fn is_member(g: &Grammar, word: &[Symbol]) -> Result<bool> {
    g.check_symbols(word)?;
    Ok(match g.template() {
        None => dyck_balanced(word),
        Some(template) => matches_template(template, g.exponent_count(), word),
    })
}

fn dyck_balanced(word: &[Symbol]) -> bool {
    let mut stack = Vec::new();
    for &s in word {
        if s % 2 == 0 {
            stack.push(s);
        } else if stack.pop() != Some(s - 1) {
            return false;
        }
    }
    stack.is_empty()
}

fn matches_template(template: &[Block], vars: usize, word: &[Symbol]) -> bool {
    if word.is_empty() {
        return true;
    }
    let rl = runs(word);
    if rl.len() != template.len() {
        return false;
    }
    let mut values = vec![None; vars];
    for (&(sym, count), block) in rl.iter().zip(template) {
        if sym != block.symbol {
            return false;
        }
        match values[block.exponent] {
            None => values[block.exponent] = Some(count),
            Some(v) if v == count => {}
            Some(_) => return false,
        }
    }
    true
}

/// Expands exponent values into the word they denote.
pub fn expand_template(template: &[Block], exponents: &[usize]) -> Vec<Symbol> {
    template
        .iter()
        .flat_map(|b| std::iter::repeat_n(b.symbol, exponents[b.exponent]))
        .collect()
}

/// Orders words by length, then lexicographically by symbol id.
pub fn shortlex(a: &[Symbol], b: &[Symbol]) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// All members of length at most `max_len`, in shortlex order.
pub fn enumerate_members(g: &Grammar, max_len: usize) -> Vec<Vec<Symbol>> {
    let mut out = match g.family {
        Family::Dyck(k) => {
            let mut out = Vec::new();
            let mut buf = Vec::new();
            let mut stack = Vec::new();
            for len in (0..=max_len).step_by(2) {
                dyck_words(k, len, &mut buf, &mut stack, &mut out);
            }
            out
        }
        _ => {
            let template = g.template().expect("counter family");
            let vars = g.exponent_count();
            let mut out = vec![Vec::new()];
            // Each exponent is at least one, so no exponent exceeds max_len.
            let mut exps = vec![1usize; vars];
            loop {
                let len: usize = template.iter().map(|b| exps[b.exponent]).sum();
                if len <= max_len {
                    out.push(expand_template(template, &exps));
                }
                // odometer over exponent values in 1..=max_len
                let mut i = 0;
                while i < vars {
                    exps[i] += 1;
                    if exps[i] <= max_len {
                        break;
                    }
                    exps[i] = 1;
                    i += 1;
                }
                if i == vars {
                    break;
                }
            }
            out
        }
    };
    out.sort_by(|a, b| shortlex(a, b));
    out
}

fn dyck_words(
    k: u8,
    len: usize,
    buf: &mut Vec<Symbol>,
    stack: &mut Vec<Symbol>,
    out: &mut Vec<Vec<Symbol>>,
) {
    if buf.len() == len {
        if stack.is_empty() {
            out.push(buf.clone());
        }
        return;
    }
    let remaining = len - buf.len();
    if stack.len() < remaining {
        for pair in 0..k {
            buf.push(2 * pair);
            stack.push(2 * pair);
            dyck_words(k, len, buf, stack, out);
            stack.pop();
            buf.pop();
        }
    }
    if let Some(&top) = stack.last() {
        buf.push(top + 1);
        stack.pop();
        dyck_words(k, len, buf, stack, out);
        stack.push(top);
        buf.pop();
    }
}

/// Every word over an alphabet of `size` symbols with length exactly `len`,
/// in lexicographic order. Intended for exhaustive checks on short lengths.
pub fn all_words(size: usize, len: usize) -> impl Iterator<Item = Vec<Symbol>> {
    let total = (size as u64).checked_pow(len as u32).unwrap_or(u64::MAX);
    (0..total).map(move |mut idx| {
        let mut w = vec![0; len];
        for slot in w.iter_mut().rev() {
            *slot = (idx % size as u64) as Symbol;
            idx /= size as u64;
        }
        w
    })
}
