//! Precursor extraction, folding and the miRNA validation gates.
//!
//! Gates run in a fixed order and a failing candidate keeps only its first
//! failure: duplex (arm placement, unpaired bases, bulges, star), precursor
//! length, second loop, then expression dominance.

pub mod fold;
pub mod structure;

use std::fmt;

use thiserror::Error;

use crate::align::GenomeIndex;
use crate::config::PipelineConfig;
use crate::model::{reverse_complement_bytes, Locus, SharedRecord, SmallRnaRecord, Strand};
pub use fold::{fold, FoldError, SecondaryStructure};
pub use structure::StemLoop;
use structure::stem_loop;

/// Why a candidate was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reason {
    InLoop,
    UnpairedExcess,
    BulgeExcess,
    StarUndefined,
    TooLong,
    SecondLoop,
    LowExpression,
    NotDominant,
}

impl Reason {
    pub const ALL: [Reason; 8] = [
        Reason::InLoop,
        Reason::UnpairedExcess,
        Reason::BulgeExcess,
        Reason::StarUndefined,
        Reason::TooLong,
        Reason::SecondLoop,
        Reason::LowExpression,
        Reason::NotDominant,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Reason::InLoop => "IN_LOOP",
            Reason::UnpairedExcess => "UNPAIRED_EXCESS",
            Reason::BulgeExcess => "BULGE_EXCESS",
            Reason::StarUndefined => "STAR_UNDEFINED",
            Reason::TooLong => "TOO_LONG",
            Reason::SecondLoop => "SECOND_LOOP",
            Reason::LowExpression => "LOW_EXPRESSION",
            Reason::NotDominant => "NOT_DOMINANT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pending,
    Pass,
    Fail(Reason),
}

impl Verdict {
    pub fn code(self) -> &'static str {
        match self {
            Verdict::Pending => "PENDING",
            Verdict::Pass => "PASS",
            Verdict::Fail(r) => r.code(),
        }
    }

    pub fn parse(code: &str) -> Option<Self> {
        match code {
            "PENDING" => Some(Verdict::Pending),
            "PASS" => Some(Verdict::Pass),
            other => Reason::ALL.iter().find(|r| r.code() == other).map(|&r| Verdict::Fail(r)),
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    pub fn is_fail(self) -> bool {
        matches!(self, Verdict::Fail(_))
    }

    /// Orders verdicts by how far through the gates a candidate got. A
    /// pending candidate has cleared every gate applied so far.
    pub fn rank(self) -> usize {
        match self {
            Verdict::Fail(r) => r as usize,
            Verdict::Pending => Reason::ALL.len(),
            Verdict::Pass => Reason::ALL.len() + 1,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A stretch of a precursor window, in window (sense) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Region {
    pub offset: usize,
    pub len: usize,
}

impl Region {
    pub fn new(offset: usize, len: usize) -> Self {
        Self { offset, len }
    }

    /// One past the last position.
    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    pub fn last(&self) -> usize {
        self.end() - 1
    }

    pub fn contains(&self, p: usize) -> bool {
        self.offset <= p && p < self.end()
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.offset < other.end() && other.offset < self.end()
    }
}

/// Genomic extent of a precursor window, 0-based half-open on the forward
/// strand; `strand` says which strand the window sequence reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Window {
    pub chrom: usize,
    pub start: usize,
    pub end: usize,
    pub strand: Strand,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Forward-strand `[start, end)` of a window-coordinate region.
    pub fn to_genomic(&self, r: Region) -> (usize, usize) {
        match self.strand {
            Strand::Plus => (self.start + r.offset, self.start + r.end()),
            Strand::Minus => (self.end - r.end(), self.end - r.offset),
        }
    }
}

/// A folded precursor window around one locus of one mature candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecursorCandidate {
    pub record: SharedRecord,
    pub locus: Locus,
    pub window: Window,
    /// Window bases in sense orientation (reverse-complemented on `-`).
    pub sequence: Vec<u8>,
    pub mirna: Region,
    pub structure: Option<SecondaryStructure>,
    /// Stem carrying the duplex, set by the duplex gate.
    pub stem: Option<StemLoop>,
    pub star: Option<Region>,
    /// Trimmed precursor, inclusive window coordinates.
    pub span: Option<(usize, usize)>,
    pub verdict: Verdict,
    /// Libraries (by index) in which the dominance test passed.
    pub expressed_in: Vec<usize>,
}

impl PrecursorCandidate {
    pub fn span_region(&self) -> Option<Region> {
        self.span.map(|(a, b)| Region::new(a, b - a + 1))
    }

    pub fn span_len(&self) -> Option<usize> {
        self.span.map(|(a, b)| b - a + 1)
    }

    pub fn star_sequence(&self) -> Option<&[u8]> {
        self.star.map(|s| &self.sequence[s.offset..s.end()])
    }

    pub fn precursor_sequence(&self) -> Option<&[u8]> {
        self.span.map(|(a, b)| &self.sequence[a..=b])
    }

    /// Trimmed precursor structure as dot-bracket text. Pairs reaching
    /// outside the span are shown unpaired.
    pub fn precursor_dot_bracket(&self) -> Option<String> {
        let (a, b) = self.span?;
        let s = self.structure.as_ref()?;
        Some(
            (a..=b)
                .map(|i| match s.partner(i) {
                    Some(j) if j < a || j > b => '.',
                    Some(j) if j > i => '(',
                    Some(_) => ')',
                    None => '.',
                })
                .collect(),
        )
    }

    fn fail(&mut self, reason: Reason) {
        self.verdict = Verdict::Fail(reason);
    }
}

/// The two search windows of a locus: one reaching `precursor_search_range`
/// upstream and `extra_flank` downstream, and the mirror image, both clipped
/// to the chromosome.
pub fn window_bounds(locus: Locus, read_len: usize, chrom_len: usize, config: &PipelineConfig) -> [Window; 2] {
    let (range, flank) = (config.precursor_search_range, config.extra_flank);
    let (s, e) = (locus.start, locus.start + read_len);
    let mk = |left: usize, right: usize| Window {
        chrom: locus.chrom,
        start: s.saturating_sub(left),
        end: (e + right).min(chrom_len),
        strand: locus.strand,
    };
    [mk(range, flank), mk(flank, range)]
}

/// Cuts both windows for a locus out of the genome, in sense orientation,
/// with the mature read's offset inside each.
pub fn extract_windows(
    record: &SharedRecord,
    locus: Locus,
    index: &GenomeIndex,
    config: &PipelineConfig,
) -> Vec<PrecursorCandidate> {
    let read_len = record.len();
    let chrom_len = index.chrom_len(locus.chrom);
    let mut out = Vec::with_capacity(2);
    for w in window_bounds(locus, read_len, chrom_len, config) {
        let fwd = index.slice(w.chrom, w.start, w.end);
        let (sequence, offset) = match w.strand {
            Strand::Plus => (fwd.to_vec(), locus.start - w.start),
            Strand::Minus => (reverse_complement_bytes(fwd), w.end - (locus.start + read_len)),
        };
        out.push(PrecursorCandidate {
            record: record.clone(),
            locus,
            window: w,
            sequence,
            mirna: Region::new(offset, read_len),
            structure: None,
            stem: None,
            star: None,
            span: None,
            verdict: Verdict::Pending,
            expressed_in: Vec::new(),
        });
    }
    out
}

/// Folds the window sequence.
pub fn fold_candidate(mut c: PrecursorCandidate) -> PrecursorCandidate {
    match fold(&c.sequence) {
        Ok(s) => c.structure = Some(s),
        // windows always hold the full read (>= 18 nt), so this is unreachable
        // in the pipeline; mark as unplaceable rather than panic
        Err(FoldError::TooShort(_)) => c.fail(Reason::InLoop),
    }
    c
}

/// The stem that pairs the most bases of `region` (earliest anchor on
/// ties). Region bases paired outside it count as unpaired in the duplex.
pub fn duplex_stem(s: &SecondaryStructure, region: Region, max_loop: usize) -> Option<StemLoop> {
    let mut tried: Vec<StemLoop> = Vec::new();
    let mut best: Option<(usize, usize)> = None;
    for p in region.offset..region.end() {
        let Some(q) = s.partner(p) else { continue };
        if tried.iter().any(|t| t.pair_of(p).is_some()) {
            continue;
        }
        let stem = stem_loop(s, (p.min(q), p.max(q)), max_loop);
        let score = (region.offset..region.end()).filter(|&r| stem.pair_of(r).is_some()).count();
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, tried.len()));
        }
        tried.push(stem);
    }
    best.map(|(_, k)| tried.swap_remove(k))
}

fn stem_for(c: &PrecursorCandidate, max_loop: usize) -> Option<StemLoop> {
    match &c.stem {
        Some(st) => Some(st.clone()),
        None => duplex_stem(c.structure.as_ref()?, c.mirna, max_loop),
    }
}

/// miRNA/star duplex rules: the mature region sits on one arm outside the
/// terminal loop of its stem, with at most `duplex_max_unpaired` bases not
/// paired within that stem and no such run longer than `duplex_max_bulge`.
pub fn check_duplex(c: &PrecursorCandidate, config: &PipelineConfig) -> Verdict {
    if c.structure.is_none() {
        return Verdict::Pending;
    }
    let region = c.mirna;
    let Some(stem) = stem_for(c, config.max_second_loop) else {
        return Verdict::Fail(Reason::InLoop);
    };
    let (l1, l2) = stem.loop_pair();
    let on_five_prime = region.last() <= l1;
    let on_three_prime = region.offset >= l2;
    if !(on_five_prime || on_three_prime) {
        return Verdict::Fail(Reason::InLoop);
    }
    let mut unpaired = 0;
    let mut run = 0;
    let mut longest = 0;
    for p in region.offset..region.end() {
        if stem.pair_of(p).is_some() {
            run = 0;
        } else {
            unpaired += 1;
            run += 1;
            longest = longest.max(run);
        }
    }
    if unpaired > config.duplex_max_unpaired {
        return Verdict::Fail(Reason::UnpairedExcess);
    }
    if longest > config.duplex_max_bulge {
        return Verdict::Fail(Reason::BulgeExcess);
    }
    Verdict::Pass
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StarError {
    #[error("star region falls outside the precursor window")]
    StarUndefined,
}

/// Stem partner of `p`, or for a base unpaired in the stem the partner of
/// the nearest stem-paired base of `region` shifted antiparallel.
fn partner_estimate(stem: &StemLoop, region: Region, p: usize) -> Option<isize> {
    if let Some(q) = stem.pair_of(p) {
        return Some(q as isize);
    }
    let (q, partner) = (region.offset..region.end())
        .filter_map(|q| stem.pair_of(q).map(|r| (q, r)))
        .min_by_key(|&(q, _)| (q.abs_diff(p), q))?;
    Some(partner as isize - (p as isize - q as isize))
}

/// The star strand of a duplex with 2-nt 3' overhangs at both ends: it
/// starts at the partner of the third-to-last mature base and ends two
/// bases past the partner of the first mature base.
pub fn derive_star(c: &PrecursorCandidate) -> Result<Region, StarError> {
    let n = c.structure.as_ref().ok_or(StarError::StarUndefined)?.len();
    let stem = stem_for(c, usize::MAX).ok_or(StarError::StarUndefined)?;
    let m = c.mirna;
    if m.len < 3 {
        return Err(StarError::StarUndefined);
    }
    let start = partner_estimate(&stem, m, m.last() - 2).ok_or(StarError::StarUndefined)?;
    let end = partner_estimate(&stem, m, m.offset).ok_or(StarError::StarUndefined)? + 2;
    if start < 0 || end >= n as isize || start > end {
        return Err(StarError::StarUndefined);
    }
    let star = Region::new(start as usize, (end - start + 1) as usize);
    if star.overlaps(&m) {
        return Err(StarError::StarUndefined);
    }
    Ok(star)
}

/// Trims the candidate to its stem (plus the mature and star regions) and
/// applies the length and second-loop rules. Returns the verdict and the
/// trimmed span.
pub fn structural_gate(c: &PrecursorCandidate, config: &PipelineConfig) -> (Verdict, Option<(usize, usize)>) {
    if c.structure.is_none() {
        return (Verdict::Pending, None);
    }
    let Some(stem) = stem_for(c, config.max_second_loop) else {
        return (Verdict::Fail(Reason::InLoop), None);
    };
    let (o1, o2) = stem.outer();
    let mut lo = o1.min(c.mirna.offset);
    let mut hi = o2.max(c.mirna.last());
    if let Some(star) = c.star {
        lo = lo.min(star.offset);
        hi = hi.max(star.last());
    }
    let span = Some((lo, hi));
    if hi - lo + 1 > config.max_premirna_len {
        return (Verdict::Fail(Reason::TooLong), span);
    }
    if stem.branched
        || stem
            .interior_loops()
            .any(|(a, b)| a.max(b) > config.max_second_loop)
    {
        return (Verdict::Fail(Reason::SecondLoop), span);
    }
    (Verdict::Pass, span)
}

/// Runs fold, duplex, star and structural gates on one window. Dominance
/// needs the aligned-read reference and is applied separately.
pub fn evaluate_structure(c: PrecursorCandidate, config: &PipelineConfig) -> PrecursorCandidate {
    let c = fold_candidate(c);
    let c = apply_duplex(c, config);
    let c = apply_star(c);
    apply_structural(c, config)
}

pub fn apply_duplex(mut c: PrecursorCandidate, config: &PipelineConfig) -> PrecursorCandidate {
    if c.verdict == Verdict::Pending {
        c.stem = stem_for(&c, config.max_second_loop);
        if let Verdict::Fail(r) = check_duplex(&c, config) {
            c.fail(r);
        }
    }
    c
}

pub fn apply_star(mut c: PrecursorCandidate) -> PrecursorCandidate {
    if c.verdict == Verdict::Pending {
        match derive_star(&c) {
            Ok(star) => c.star = Some(star),
            Err(StarError::StarUndefined) => c.fail(Reason::StarUndefined),
        }
    }
    c
}

pub fn apply_structural(mut c: PrecursorCandidate, config: &PipelineConfig) -> PrecursorCandidate {
    if c.verdict == Verdict::Pending {
        let (v, span) = structural_gate(&c, config);
        c.span = span;
        if let Verdict::Fail(r) = v {
            c.fail(r);
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Site {
    start: usize,
    len: u32,
    record: u32,
}

/// Every aligned read placed on the genome, kept for expression lookups
/// within precursor windows. Built once and shared read-only.
#[derive(Debug, Clone, Default)]
pub struct AlignedReference {
    /// Sites per `chrom * 2 + strand`, sorted by start.
    sites: Vec<Vec<Site>>,
    counts: Vec<Vec<u64>>,
}

fn strand_slot(chrom: usize, strand: Strand) -> usize {
    chrom * 2 + usize::from(strand == Strand::Minus)
}

impl AlignedReference {
    pub fn build(records: &[SmallRnaRecord], n_chroms: usize) -> Self {
        let mut sites = vec![Vec::new(); n_chroms * 2];
        let mut counts = Vec::with_capacity(records.len());
        for (ri, r) in records.iter().enumerate() {
            counts.push(r.counts.clone());
            for l in &r.loci {
                sites[strand_slot(l.chrom, l.strand)].push(Site {
                    start: l.start,
                    len: r.len() as u32,
                    record: ri as u32,
                });
            }
        }
        for s in &mut sites {
            s.sort_unstable_by_key(|x| (x.start, x.len, x.record));
        }
        Self { sites, counts }
    }

    pub fn num_records(&self) -> usize {
        self.counts.len()
    }

    /// Library totals of every aligned read (one count per record, however
    /// many loci it has).
    pub fn library_totals(&self, n_libraries: usize) -> Vec<u64> {
        let mut t = vec![0u64; n_libraries];
        for c in &self.counts {
            for (acc, v) in t.iter_mut().zip(c) {
                *acc += v;
            }
        }
        t
    }

    fn sites_in(&self, chrom: usize, strand: Strand, start: usize, end: usize) -> impl Iterator<Item = &Site> {
        let list = self
            .sites
            .get(strand_slot(chrom, strand))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let from = list.partition_point(|s| s.start < start);
        list[from..]
            .iter()
            .take_while(move |s| s.start < end)
            .filter(move |s| s.start + s.len as usize <= end)
    }

    /// Reads of library `lib` lying entirely inside `[start, end)` on `strand`.
    pub fn window_total(&self, chrom: usize, strand: Strand, start: usize, end: usize, lib: usize) -> u64 {
        self.sites_in(chrom, strand, start, end)
            .map(|s| self.counts[s.record as usize][lib])
            .sum()
    }

    /// Count in `lib` of reads placed exactly at `[start, start + len)`.
    pub fn count_at(&self, chrom: usize, strand: Strand, start: usize, len: usize, lib: usize) -> u64 {
        self.sites_in(chrom, strand, start, start + len)
            .filter(|s| s.start == start && s.len as usize == len)
            .map(|s| self.counts[s.record as usize][lib])
            .sum()
    }
}

/// Per-library dominance: mature plus star reads must make up at least
/// `dominance_threshold` of the reads inside the trimmed precursor, and the
/// mature read must reach `min_mirna_freq`. Returns the verdict and the
/// libraries that passed.
pub fn dominance_check(
    c: &PrecursorCandidate,
    reference: &AlignedReference,
    config: &PipelineConfig,
) -> (Verdict, Vec<usize>) {
    let Some(span) = c.span_region() else {
        return (Verdict::Pending, Vec::new());
    };
    let w = c.window;
    let (gs, ge) = w.to_genomic(span);
    let star = c.star.map(|s| w.to_genomic(s));
    let mut passed = Vec::new();
    let mut any_expressed = false;
    for lib in 0..c.record.counts.len() {
        let mature = c.record.counts[lib];
        if mature < config.min_mirna_freq {
            continue;
        }
        any_expressed = true;
        let star_count = star
            .map(|(s, e)| reference.count_at(w.chrom, w.strand, s, e - s, lib))
            .unwrap_or(0);
        let total = reference.window_total(w.chrom, w.strand, gs, ge, lib).max(mature);
        let ratio = (mature + star_count) as f64 / total as f64;
        if ratio >= config.dominance_threshold {
            passed.push(lib);
        }
    }
    let verdict = if !passed.is_empty() {
        Verdict::Pass
    } else if any_expressed {
        Verdict::Fail(Reason::NotDominant)
    } else {
        Verdict::Fail(Reason::LowExpression)
    };
    (verdict, passed)
}

pub fn apply_dominance(
    mut c: PrecursorCandidate,
    reference: &AlignedReference,
    config: &PipelineConfig,
) -> PrecursorCandidate {
    if c.verdict == Verdict::Pending {
        let (v, libs) = dominance_check(&c, reference, config);
        c.verdict = v;
        c.expressed_in = libs;
    }
    c
}
