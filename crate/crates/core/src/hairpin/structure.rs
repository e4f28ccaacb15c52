//! Stem-loop topology around a region of a folded precursor.

use super::fold::SecondaryStructure;

/// The stem carrying a given pair: consecutive pairs linked by interior
/// loops or bulges, from the outermost pair to the pair closing the
/// terminal loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StemLoop {
    /// Pairs from outermost to innermost.
    pub chain: Vec<(usize, usize)>,
    /// True if the innermost pair closes a multi-branch loop rather than a
    /// hairpin loop.
    pub branched: bool,
}

impl StemLoop {
    pub fn outer(&self) -> (usize, usize) {
        self.chain[0]
    }

    /// Pair closing the terminal loop.
    pub fn loop_pair(&self) -> (usize, usize) {
        *self.chain.last().expect("non-empty chain")
    }

    /// Unpaired bases on each side of every loop between consecutive
    /// chain pairs, outermost first.
    pub fn interior_loops(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.chain
            .windows(2)
            .map(|w| (w[1].0 - w[0].0 - 1, w[0].1 - w[1].1 - 1))
    }

    /// Partner of `p` if `p` is paired by a pair of this stem.
    pub fn pair_of(&self, p: usize) -> Option<usize> {
        let (l1, l2) = self.loop_pair();
        if p <= l1 {
            let k = self.chain.binary_search_by_key(&p, |c| c.0).ok()?;
            Some(self.chain[k].1)
        } else if p >= l2 {
            // right ends decrease from outer to inner
            let k = self.chain.binary_search_by(|c| p.cmp(&c.1)).ok()?;
            Some(self.chain[k].0)
        } else {
            None
        }
    }

    pub fn contains_pair(&self, i: usize, j: usize) -> bool {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        self.chain.iter().any(|&p| p == (lo, hi))
    }
}

/// Pairs directly enclosed by `(i, j)`.
pub fn children(s: &SecondaryStructure, i: usize, j: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut k = i + 1;
    while k < j {
        match s.partner(k) {
            Some(p) if p > k => {
                out.push((k, p));
                k = p + 1;
            }
            _ => k += 1,
        }
    }
    out
}

/// Innermost pair enclosing `(i, j)`, if any.
pub fn parent(s: &SecondaryStructure, i: usize, j: usize) -> Option<(usize, usize)> {
    let mut k = i;
    while k > 0 {
        k -= 1;
        match s.partner(k) {
            Some(p) if p > j => return Some((k, p)),
            // closing bracket of a sibling to the left; skip over it
            Some(p) if p < k => k = p,
            _ => {}
        }
    }
    None
}

/// Follows the stem containing `anchor` inward to its terminal loop and
/// outward while each enclosing loop is an interior loop or bulge with at
/// most `max_outer_loop` unpaired bases per side.
pub fn stem_loop(s: &SecondaryStructure, anchor: (usize, usize), max_outer_loop: usize) -> StemLoop {
    let mut outward = Vec::new();
    let (mut i, mut j) = anchor;
    while let Some((pi, pj)) = parent(s, i, j) {
        if children(s, pi, pj).len() != 1 {
            break;
        }
        if i - pi - 1 > max_outer_loop || pj - j - 1 > max_outer_loop {
            break;
        }
        outward.push((pi, pj));
        i = pi;
        j = pj;
    }
    outward.reverse();

    let mut chain = outward;
    chain.push(anchor);
    let (mut i, mut j) = anchor;
    let branched = loop {
        let kids = children(s, i, j);
        match kids.len() {
            0 => break false,
            1 => {
                let (ci, cj) = kids[0];
                chain.push((ci, cj));
                i = ci;
                j = cj;
            }
            _ => break true,
        }
    };
    StemLoop { chain, branched }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(db: &str) -> SecondaryStructure {
        SecondaryStructure::from_dot_bracket(db).unwrap()
    }

    #[test]
    fn simple_stem() {
        let s = st("..(((..((....))..)))..");
        let sl = stem_loop(&s, (8, 13), 5);
        assert_eq!(sl.outer(), (2, 19));
        assert_eq!(sl.loop_pair(), (8, 13));
        assert!(!sl.branched);
        let loops: Vec<_> = sl.interior_loops().collect();
        assert_eq!(loops, vec![(0, 0), (0, 0), (2, 2), (0, 0)]);
        for (i, j) in s.pairs() {
            assert_eq!(sl.pair_of(i), Some(j));
            assert_eq!(sl.pair_of(j), Some(i));
        }
        assert_eq!(sl.pair_of(5), None);
        assert_eq!(sl.pair_of(0), None);
    }

    #[test]
    fn outward_walk_stops_at_large_loop() {
        let s = st("((.......((((....))))........))");
        let sl = stem_loop(&s, (9, 20), 5);
        assert_eq!(sl.outer(), (9, 20));
        let sl = stem_loop(&s, (9, 20), 10);
        assert_eq!(sl.outer(), (0, 30));
    }

    #[test]
    fn branched_interior() {
        let s = st("((((...))((...))))");
        let sl = stem_loop(&s, (0, 17), 5);
        assert!(sl.branched);
        assert_eq!(sl.loop_pair(), (1, 16));
        assert_eq!(parent(&s, 9, 15), Some((1, 16)));
        assert_eq!(parent(&s, 1, 16), Some((0, 17)));
        assert_eq!(parent(&s, 0, 17), None);
    }
}
