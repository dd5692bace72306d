//! Davenport–Schinzel sequences: validation, exact maximum lengths for small
//! alphabets by search, and closed forms.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

/// Largest alphabet accepted by [`lambda_brute`].
pub const BRUTE_MAX_SYMBOLS: usize = 6;
/// Largest order accepted by [`lambda_brute`].
pub const BRUTE_MAX_ORDER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DsError {
    #[error("symbol {symbol} repeats at position {index}")]
    AdjacentRepeat { index: usize, symbol: usize },
    #[error("search too large: n = {n}, s = {s} (limits n ≤ 6, s ≤ 4)")]
    TooLarge { n: usize, s: usize },
    #[error("order must be positive")]
    ZeroOrder,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LabelSequence {
    symbols: Vec<usize>,
    cyclic: bool,
}

impl LabelSequence {
    pub fn new(symbols: Vec<usize>, cyclic: bool) -> Result<Self, DsError> {
        for k in 1..symbols.len() {
            if symbols[k] == symbols[k - 1] {
                return Err(DsError::AdjacentRepeat { index: k, symbol: symbols[k] });
            }
        }
        if cyclic && symbols.len() > 1 && symbols[0] == symbols[symbols.len() - 1] {
            return Err(DsError::AdjacentRepeat { index: 0, symbol: symbols[0] });
        }
        Ok(LabelSequence { symbols, cyclic })
    }

    /// Sequence over letters, `'a'` being label 0.
    pub fn from_letters(s: &str, cyclic: bool) -> Result<Self, DsError> {
        Self::new(s.chars().map(|c| c as usize - 'a' as usize).collect(), cyclic)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Distinct labels, ascending.
    pub fn alphabet(&self) -> Vec<usize> {
        let mut a = self.symbols.clone();
        a.sort_unstable();
        a.dedup();
        a
    }
}

/// Longest alternating subsequence `a b a b …` or `b a b a …`. For cyclic
/// sequences the maximum over all rotations.
pub fn alternation(seq: &LabelSequence, a: usize, b: usize) -> usize {
    let restricted: Vec<usize> = seq.symbols.iter().copied().filter(|&x| x == a || x == b).collect();
    if restricted.is_empty() {
        return 0;
    }
    let mut runs: Vec<usize> = Vec::new();
    let mut lengths: Vec<usize> = Vec::new();
    for &x in &restricted {
        if runs.last() == Some(&x) {
            *lengths.last_mut().unwrap() += 1;
        } else {
            runs.push(x);
            lengths.push(1);
        }
    }
    if !seq.cyclic || runs.len() == 1 {
        return runs.len();
    }
    if runs[0] == runs[runs.len() - 1] {
        let last = lengths.pop().unwrap();
        runs.pop();
        lengths[0] += last;
    }
    // Starting a rotation inside a run of length ≥ 2 splits it in two.
    if lengths.iter().any(|&l| l >= 2) {
        runs.len() + 1
    } else {
        runs.len()
    }
}

/// Longest alternation over all pairs of distinct labels.
pub fn max_alternation(seq: &LabelSequence) -> usize {
    let alphabet = seq.alphabet();
    let mut best = alphabet.len().min(1);
    for (k, &a) in alphabet.iter().enumerate() {
        for &b in &alphabet[k + 1..] {
            best = best.max(alternation(seq, a, b));
        }
    }
    best
}

/// True iff no two labels alternate `s + 2` times.
pub fn is_davenport_schinzel(seq: &LabelSequence, s: usize) -> bool {
    max_alternation(seq) <= s + 1
}

/// Smallest order `s ≥ 1` for which the sequence is Davenport–Schinzel.
pub fn minimal_order(seq: &LabelSequence) -> usize {
    max_alternation(seq).saturating_sub(1).max(1)
}

/// Exact `λ_s(n)` by exhaustive search over canonical sequences (labels
/// introduced in increasing order), memoised on the per-pair alternation
/// state.
pub fn lambda_brute(n: usize, s: usize) -> Result<usize, DsError> {
    if s == 0 {
        return Err(DsError::ZeroOrder);
    }
    if n > BRUTE_MAX_SYMBOLS || s > BRUTE_MAX_ORDER {
        return Err(DsError::TooLarge { n, s });
    }
    if n == 0 {
        return Ok(0);
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut pair_index = vec![vec![usize::MAX; n]; n];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        pair_index[a][b] = k;
        pair_index[b][a] = k;
    }
    let mut search = Search { n, limit: s + 1, pair_index, memo: HashMap::new() };
    // State per pair: alternation so far (0..=s+1) and last symbol of the
    // pair seen (0 none, 1 smaller, 2 larger), packed as 3·alt + last.
    let mut state = vec![0u8; pairs.len() + 2];
    state[pairs.len()] = u8::MAX; // last symbol
    state[pairs.len() + 1] = 0; // labels used
    Ok(search.longest(&mut state))
}

struct Search {
    n: usize,
    limit: usize,
    pair_index: Vec<Vec<usize>>,
    memo: HashMap<Vec<u8>, usize>,
}

impl Search {
    /// Longest continuation from `state`.
    fn longest(&mut self, state: &mut Vec<u8>) -> usize {
        if let Some(&v) = self.memo.get(state.as_slice()) {
            return v;
        }
        let np = state.len() - 2;
        let last = state[np];
        let used = state[np + 1] as usize;
        let mut best = 0;
        for x in 0..(used + 1).min(self.n) {
            if x as u8 == last {
                continue;
            }
            let saved = state.clone();
            let mut ok = true;
            for y in 0..self.n {
                if y == x {
                    continue;
                }
                let k = self.pair_index[x][y];
                let tag = if x < y { 1 } else { 2 };
                let (alt, prev) = (state[k] / 3, state[k] % 3);
                if prev != tag {
                    if alt as usize + 1 > self.limit {
                        ok = false;
                        break;
                    }
                    state[k] = 3 * (alt + 1) + tag;
                }
            }
            if ok {
                state[np] = x as u8;
                state[np + 1] = used.max(x + 1) as u8;
                best = best.max(1 + self.longest(state));
            }
            *state = saved;
        }
        self.memo.insert(state.clone(), best);
        best
    }
}

/// Closed-form value of `λ_s(n)` where one is known, otherwise a bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Lambda {
    Exact { value: u64 },
    /// `bound` is the pair-counting bound `s·C(n,2) + 1`; `estimate` is the
    /// near-linear `s·n·(1 + log* n)` and is not a proven bound.
    UpperBound { bound: u64, estimate: u64 },
}

impl Lambda {
    /// The exact value or the proven bound.
    pub fn value(&self) -> u64 {
        match *self {
            Lambda::Exact { value } => value,
            Lambda::UpperBound { bound, .. } => bound,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Lambda::Exact { .. })
    }
}

pub fn lambda_closed(n: u64, s: u64) -> Lambda {
    match s {
        0 => Lambda::Exact { value: 0 },
        1 => Lambda::Exact { value: n },
        2 => Lambda::Exact { value: (2 * n).saturating_sub(1) },
        _ => {
            let bound = if n == 0 { 0 } else { s * n * (n - 1) / 2 + 1 };
            let estimate = s * n * (1 + log_star(n as f64));
            Lambda::UpperBound { bound, estimate }
        }
    }
}

/// Iterated base-2 logarithm.
pub fn log_star(mut x: f64) -> u64 {
    let mut k = 0;
    while x > 1.0 {
        x = x.log2();
        k += 1;
    }
    k
}
