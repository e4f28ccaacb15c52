//! Weighted maximum base-pairing by dynamic programming.
//!
//! Pair weights are G:C = 3, A:T = 2, G:T = 1; a hairpin loop encloses at
//! least three unpaired bases and pairs never cross. Among optimal
//! structures the one whose `(i, j)`-sorted pair list is lexicographically
//! smallest is returned.

use std::fmt;

use thiserror::Error;

pub const MIN_LOOP: usize = 3;
pub const MIN_FOLD_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FoldError {
    #[error("sequence of {0} nt is too short to fold (minimum {MIN_FOLD_LEN})")]
    TooShort(usize),
}

#[inline]
pub fn pair_weight(a: u8, b: u8) -> u32 {
    match (a, b) {
        (b'G', b'C') | (b'C', b'G') => 3,
        (b'A', b'T') | (b'T', b'A') => 2,
        (b'G', b'T') | (b'T', b'G') => 1,
        _ => 0,
    }
}

/// A nested structure over a sequence, held as a pair table.
#[derive(Clone, PartialEq, Eq)]
pub struct SecondaryStructure {
    partner: Vec<Option<usize>>,
}

impl fmt::Debug for SecondaryStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Structure({})", self.dot_bracket())
    }
}

impl SecondaryStructure {
    pub fn unpaired(len: usize) -> Self {
        Self { partner: vec![None; len] }
    }

    /// Builds from `(i, j)` pairs; panics on a position paired twice.
    pub fn from_pairs(len: usize, pairs: &[(usize, usize)]) -> Self {
        let mut partner = vec![None; len];
        for &(i, j) in pairs {
            assert!(partner[i].is_none() && partner[j].is_none(), "position paired twice");
            partner[i] = Some(j);
            partner[j] = Some(i);
        }
        Self { partner }
    }

    /// Parses dot-bracket text; `None` if brackets are unbalanced or other
    /// characters appear.
    pub fn from_dot_bracket(db: &str) -> Option<Self> {
        let mut stack = Vec::new();
        let mut partner = vec![None; db.len()];
        for (i, c) in db.bytes().enumerate() {
            match c {
                b'(' => stack.push(i),
                b')' => {
                    let j = stack.pop()?;
                    partner[i] = Some(j);
                    partner[j] = Some(i);
                }
                b'.' => {}
                _ => return None,
            }
        }
        stack.is_empty().then_some(Self { partner })
    }

    pub fn len(&self) -> usize {
        self.partner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partner.is_empty()
    }

    #[inline]
    pub fn partner(&self, i: usize) -> Option<usize> {
        self.partner[i]
    }

    pub fn is_paired(&self, i: usize) -> bool {
        self.partner[i].is_some()
    }

    /// Pairs as `(i, j)` with `i < j`, sorted.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.partner
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.filter(|&j| j > i).map(|j| (i, j)))
            .collect()
    }

    pub fn dot_bracket(&self) -> String {
        self.partner
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                None => '.',
                Some(j) if *j > i => '(',
                Some(_) => ')',
            })
            .collect()
    }

    pub fn weight(&self, seq: &[u8]) -> u32 {
        self.pairs().iter().map(|&(i, j)| pair_weight(seq[i], seq[j])).sum()
    }

    /// Checks nesting, legal pair types and minimum hairpin loop size.
    pub fn is_valid_for(&self, seq: &[u8]) -> bool {
        if seq.len() != self.partner.len() {
            return false;
        }
        let mut stack: Vec<usize> = Vec::new();
        for i in 0..self.partner.len() {
            match self.partner[i] {
                None => {}
                Some(j) if j == i => return false,
                Some(j) if j > i => {
                    if self.partner[j] != Some(i) || j - i - 1 < MIN_LOOP || pair_weight(seq[i], seq[j]) == 0 {
                        return false;
                    }
                    stack.push(i);
                }
                Some(j) => {
                    if stack.pop() != Some(j) {
                        return false;
                    }
                }
            }
        }
        stack.is_empty()
    }
}

/// Folds `seq` (uppercase DNA; other bytes never pair).
pub fn fold(seq: &[u8]) -> Result<SecondaryStructure, FoldError> {
    let n = seq.len();
    if n < MIN_FOLD_LEN {
        return Err(FoldError::TooShort(n));
    }
    let table = fill(seq);
    Ok(traceback(seq, &table))
}

/// Optimal total pair weight of `seq`, without traceback.
pub fn fold_weight(seq: &[u8]) -> u32 {
    if seq.len() <= MIN_LOOP + 1 {
        return 0;
    }
    let t = fill(seq);
    t.get(0, seq.len() - 1)
}

struct Table {
    n: usize,
    /// best[i * n + j] for the closed interval i..=j
    best: Vec<u32>,
    /// transposed copy, best_t[j * n + i], so the split loop reads contiguously
    best_t: Vec<u32>,
}

impl Table {
    #[inline]
    fn get(&self, i: usize, j: usize) -> u32 {
        if i >= j {
            0
        } else {
            self.best[i * self.n + j]
        }
    }
}

fn fill(seq: &[u8]) -> Table {
    let n = seq.len();
    let mut t = Table {
        n,
        best: vec![0; n * n],
        best_t: vec![0; n * n],
    };
    for i in (0..n).rev() {
        for j in (i + MIN_LOOP + 1)..n {
            let mut best = if i + 1 < j { t.best[(i + 1) * n + j] } else { 0 };
            let inner_row = (i + 1) * n;
            let outer_col = j * n;
            for k in (i + MIN_LOOP + 1)..=j {
                let w = pair_weight(seq[i], seq[k]);
                if w == 0 {
                    continue;
                }
                let inner = t.best[inner_row + k - 1];
                let outer = if k < j { t.best_t[outer_col + k + 1] } else { 0 };
                let v = w + inner + outer;
                if v > best {
                    best = v;
                }
            }
            t.best[i * n + j] = best;
            t.best_t[j * n + i] = best;
        }
    }
    t
}

fn traceback(seq: &[u8], t: &Table) -> SecondaryStructure {
    let n = seq.len();
    let mut s = SecondaryStructure::unpaired(n);
    let mut stack = vec![(0usize, n - 1)];
    while let Some((i, j)) = stack.pop() {
        if i >= j || j - i <= MIN_LOOP {
            continue;
        }
        let target = t.get(i, j);
        if target == 0 {
            continue;
        }
        // pairing i (with the smallest partner) gives the smaller pair list
        let mut paired = false;
        for k in (i + MIN_LOOP + 1)..=j {
            let w = pair_weight(seq[i], seq[k]);
            if w == 0 {
                continue;
            }
            let outer = if k < j { t.get(k + 1, j) } else { 0 };
            if w + t.get(i + 1, k - 1) + outer == target {
                s.partner[i] = Some(k);
                s.partner[k] = Some(i);
                stack.push((k + 1, j));
                stack.push((i + 1, k - 1));
                paired = true;
                break;
            }
        }
        if !paired {
            stack.push((i + 1, j));
        }
    }
    s
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Every valid structure of `seq`, as sorted pair lists.
    pub fn enumerate(seq: &[u8]) -> Vec<Vec<(usize, usize)>> {
        fn rec(seq: &[u8], i: usize, j: usize) -> Vec<Vec<(usize, usize)>> {
            if i > j || j - i <= MIN_LOOP {
                return vec![Vec::new()];
            }
            let mut out = rec(seq, i + 1, j);
            for k in (i + MIN_LOOP + 1)..=j {
                if pair_weight(seq[i], seq[k]) == 0 {
                    continue;
                }
                let inner = if k > i + 1 { rec(seq, i + 1, k - 1) } else { vec![Vec::new()] };
                let outer = if k < j { rec(seq, k + 1, j) } else { vec![Vec::new()] };
                for a in &inner {
                    for b in &outer {
                        let mut v = vec![(i, k)];
                        v.extend_from_slice(a);
                        v.extend_from_slice(b);
                        out.push(v);
                    }
                }
            }
            out
        }
        if seq.is_empty() {
            return vec![Vec::new()];
        }
        rec(seq, 0, seq.len() - 1)
    }

    /// Maximum weight and the lexicographically smallest optimal pair list.
    pub fn best(seq: &[u8]) -> (u32, Vec<(usize, usize)>) {
        let mut all: Vec<(u32, Vec<(usize, usize)>)> = enumerate(seq)
            .into_iter()
            .map(|p| (p.iter().map(|&(i, j)| pair_weight(seq[i], seq[j])).sum(), p))
            .collect();
        let max = all.iter().map(|(w, _)| *w).max().unwrap_or(0);
        all.retain(|(w, _)| *w == max);
        all.sort();
        (max, all.swap_remove(0).1)
    }
}
