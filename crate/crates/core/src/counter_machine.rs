//! Counter machines: finite control plus integer counters, with transitions
//! conditioned on which counters are currently zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{Family, Grammar, Symbol};

pub type StateId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CounterAction {
    /// ×0
    Reset,
    /// −1 if > 0
    Dec,
    /// +0
    Keep,
    /// +1
    Inc,
}

impl CounterAction {
    fn apply(self, value: u64) -> u64 {
        match self {
            CounterAction::Reset => 0,
            CounterAction::Dec => value.saturating_sub(1),
            CounterAction::Keep => value,
            CounterAction::Inc => value + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcceptanceMode {
    FinalStateInF,
    AllCountersZero,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub next: StateId,
    pub actions: Vec<CounterAction>,
}

/// A counter machine whose transition and counter-update functions are
/// stored as one total table indexed by (symbol, state, zero-flags).
///
/// Zero-flags are a bitmask: bit `c` is set when counter `c` is zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterMachine {
    pub state_count: usize,
    pub alphabet_size: usize,
    pub initial: StateId,
    pub accepting: Vec<bool>,
    pub counter_count: usize,
    pub acceptance: AcceptanceMode,
    table: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipVerdict {
    pub accepted: bool,
    pub final_state: StateId,
    pub final_counters: Vec<u64>,
}

impl CounterMachine {
    /// Builds a machine by evaluating `rule` on every (symbol, state, flags)
    /// triple, so the resulting table is total by construction.
    pub fn from_rule<R>(
        state_count: usize,
        alphabet_size: usize,
        counter_count: usize,
        initial: StateId,
        accepting: &[StateId],
        acceptance: AcceptanceMode,
        mut rule: R,
    ) -> Result<Self>
    where
        R: FnMut(Symbol, StateId, &[bool]) -> Transition,
    {
        if counter_count == 0 || counter_count > 16 {
            return Err(Error::Unsupported(format!("{counter_count} counters")));
        }
        if initial >= state_count || accepting.iter().any(|&q| q >= state_count) {
            return Err(Error::Config("state id out of range".into()));
        }
        let flag_combos = 1usize << counter_count;
        let mut table = Vec::with_capacity(alphabet_size * state_count * flag_combos);
        let mut flags = vec![false; counter_count];
        for sym in 0..alphabet_size {
            for q in 0..state_count {
                for mask in 0..flag_combos {
                    for (c, f) in flags.iter_mut().enumerate() {
                        *f = mask & (1 << c) != 0;
                    }
                    let t = rule(sym as Symbol, q, &flags);
                    if t.next >= state_count || t.actions.len() != counter_count {
                        return Err(Error::Config(format!(
                            "malformed transition at symbol {sym}, state {q}, flags {mask:b}"
                        )));
                    }
                    table.push(t);
                }
            }
        }
        let mut acc = vec![false; state_count];
        for &q in accepting {
            acc[q] = true;
        }
        Ok(CounterMachine {
            state_count,
            alphabet_size,
            initial,
            accepting: acc,
            counter_count,
            acceptance,
            table,
        })
    }

    pub fn transition(&self, symbol: Symbol, state: StateId, zero_mask: usize) -> &Transition {
        let flag_combos = 1usize << self.counter_count;
        &self.table[(symbol as usize * self.state_count + state) * flag_combos + zero_mask]
    }

    pub fn run(&self, word: &[Symbol]) -> Result<MembershipVerdict> {
        self.run_observed(word, |_, _| {})
    }

    /// Runs the machine, calling `observe(state, counters)` after every step.
    pub fn run_observed<O>(&self, word: &[Symbol], mut observe: O) -> Result<MembershipVerdict>
    where
        O: FnMut(StateId, &[u64]),
    {
        if let Some(&bad) = word.iter().find(|&&s| s as usize >= self.alphabet_size) {
            return Err(Error::InvalidSymbol {
                symbol: bad.to_string(),
                grammar: "counter machine".into(),
            });
        }
        let mut state = self.initial;
        let mut counters = vec![0u64; self.counter_count];
        for &sym in word {
            let mask = counters
                .iter()
                .enumerate()
                .fold(0usize, |m, (c, &v)| if v == 0 { m | (1 << c) } else { m });
            let t = self.transition(sym, state, mask);
            for (value, action) in counters.iter_mut().zip(&t.actions) {
                *value = action.apply(*value);
            }
            state = t.next;
            observe(state, &counters);
        }
        let in_f = self.accepting[state];
        let zero = counters.iter().all(|&v| v == 0);
        let accepted = match self.acceptance {
            AcceptanceMode::FinalStateInF => in_f,
            AcceptanceMode::AllCountersZero => zero,
            AcceptanceMode::Both => in_f && zero,
        };
        Ok(MembershipVerdict {
            accepted,
            final_state: state,
            final_counters: counters,
        })
    }
}

pub fn run_counter_machine(cm: &CounterMachine, word: &[Symbol]) -> Result<MembershipVerdict> {
    cm.run(word)
}

fn go(next: StateId, actions: &[CounterAction]) -> Transition {
    Transition {
        next,
        actions: actions.to_vec(),
    }
}

/// Hand-built machines for Dyck-1 and the counter families.
///
/// Every machine has an absorbing trap state (the last state id) that
/// rejecting prefixes are routed to, including any decrement of a zero
/// counter the language forbids.
pub fn built_in_cm(g: &Grammar) -> Result<CounterMachine> {
    use CounterAction::{Dec, Inc, Keep};
    match g.family() {
        Family::Dyck(1) => {
            // states: 0 = live, 1 = trap
            const TRAP: StateId = 1;
            CounterMachine::from_rule(2, 2, 1, 0, &[0], AcceptanceMode::Both, |sym, q, zero| {
                match (q, sym) {
                    (TRAP, _) => go(TRAP, &[Keep]),
                    (_, 0) => go(0, &[Inc]),
                    (_, _) if zero[0] => go(TRAP, &[Keep]),
                    _ => go(0, &[Dec]),
                }
            })
        }
        Family::Dyck(k) => Err(Error::Unsupported(format!(
            "Dyck-{k} is not a one-counter language; no counter machine is provided"
        ))),
        Family::AnBnCn | Family::AnBnCnDn => {
            // Phase p reads letter p. Counter p tracks (#letter p − #letter p+1).
            let letters = g.alphabet_size();
            let counters = letters - 1;
            let trap = letters;
            CounterMachine::from_rule(
                letters + 1,
                letters,
                counters,
                0,
                &[0, letters - 1],
                AcceptanceMode::Both,
                |sym, q, zero| {
                    let keep = vec![Keep; counters];
                    let sym = sym as usize;
                    if q == trap {
                        return go(trap, &keep);
                    }
                    let mut actions = keep.clone();
                    if sym == q {
                        // another copy of the current letter
                        if q > 0 {
                            if zero[q - 1] {
                                return go(trap, &keep);
                            }
                            actions[q - 1] = Dec;
                        }
                        if q < counters {
                            actions[q] = Inc;
                        }
                        go(q, &actions)
                    } else if sym == q + 1 {
                        // advance to the next block; the previous block must be fully matched
                        if q > 0 && !zero[q - 1] {
                            return go(trap, &keep);
                        }
                        if zero[sym - 1] {
                            return go(trap, &keep);
                        }
                        actions[sym - 1] = Dec;
                        if sym < counters {
                            actions[sym] = Inc;
                        }
                        go(sym, &actions)
                    } else {
                        go(trap, &keep)
                    }
                },
            )
        }
        Family::AnBmAmBn => {
            // a^n b^m a^m b^n: counter 0 holds n, counter 1 holds m.
            // states: 0 start, 1..=4 blocks, 5 trap
            const TRAP: StateId = 5;
            CounterMachine::from_rule(6, 2, 2, 0, &[0, 4], AcceptanceMode::Both, |sym, q, zero| {
                let a = sym == 0;
                match q {
                    0 | 1 if a => go(1, &[Inc, Keep]),
                    1 => go(2, &[Keep, Inc]),
                    2 if a => go(3, &[Keep, Dec]),
                    2 => go(2, &[Keep, Inc]),
                    3 if a && !zero[1] => go(3, &[Keep, Dec]),
                    3 if !a && zero[1] => go(4, &[Dec, Keep]),
                    4 if !a && !zero[0] => go(4, &[Dec, Keep]),
                    _ => go(TRAP, &[Keep, Keep]),
                }
            })
        }
        Family::AnBmAmBm => {
            // a^n b^m a^m b^m: counter 0 matches block 2 against block 3,
            // counter 1 matches block 3 against block 4.
            const TRAP: StateId = 5;
            CounterMachine::from_rule(6, 2, 2, 0, &[0, 4], AcceptanceMode::Both, |sym, q, zero| {
                let a = sym == 0;
                match q {
                    0 | 1 if a => go(1, &[Keep, Keep]),
                    1 => go(2, &[Inc, Keep]),
                    2 if a => go(3, &[Dec, Inc]),
                    2 => go(2, &[Inc, Keep]),
                    3 if a && !zero[0] => go(3, &[Dec, Inc]),
                    3 if !a && zero[0] => go(4, &[Keep, Dec]),
                    4 if !a && !zero[1] => go(4, &[Keep, Dec]),
                    _ => go(TRAP, &[Keep, Keep]),
                }
            })
        }
    }
}
