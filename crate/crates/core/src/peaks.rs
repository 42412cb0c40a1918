//! Vote-accumulator peak detection on an intensity histogram.
//!
//! Every non-empty bin is expressed as an offset from the anchor, the bin of
//! highest frequency. Offsets on each side of the anchor are visited in order
//! of decreasing frequency; an offset collects a vote each time it lies beyond
//! the contiguous run of offsets already seen. Offsets far from the anchor
//! therefore gather many votes, and multiplying the votes by the bin frequency
//! suppresses far offsets that carry little mass. Each side is cut at the mean
//! of its scores, the two sides are joined around the anchor, and touching
//! survivors are merged into a single peak.

use crate::error::{Error, Result};
use crate::image::Histogram;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    /// Intensities below the anchor.
    Negative,
    /// Intensities above the anchor.
    Positive,
}

impl Side {
    /// Absolute intensity of `offset` on this side of `anchor`.
    pub fn intensity(self, anchor: u8, offset: usize) -> u8 {
        match self {
            Side::Negative => anchor - offset as u8,
            Side::Positive => anchor + offset as u8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OffsetEntry {
    pub offset: i16,
    pub frequency: u64,
}

/// Non-empty bins as offsets from the anchor, ordered by decreasing frequency.
///
/// Equal frequencies are ordered by increasing intensity, so the first entry is
/// always the anchor itself (offset 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetTable {
    anchor: u8,
    entries: Vec<OffsetEntry>,
}

impl OffsetTable {
    pub fn anchor(&self) -> u8 {
        self.anchor
    }

    pub fn entries(&self) -> &[OffsetEntry] {
        &self.entries
    }

    /// Offset magnitudes on one side, in table order.
    pub fn side_offsets(&self, side: Side) -> Vec<u8> {
        self.entries
            .iter()
            .filter(|e| match side {
                Side::Positive => e.offset > 0,
                Side::Negative => e.offset < 0,
            })
            .map(|e| e.offset.unsigned_abs() as u8)
            .collect()
    }
}

pub fn build_offset_table(hist: &Histogram) -> Result<OffsetTable> {
    let mut bins: Vec<(u8, u64)> = hist.nonzero().collect();
    if bins.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    // stable sort keeps increasing intensity among equal frequencies
    bins.sort_by_key(|&(_, count)| std::cmp::Reverse(count));
    let anchor = bins[0].0;
    let entries = bins
        .into_iter()
        .map(|(v, frequency)| OffsetEntry {
            offset: v as i16 - anchor as i16,
            frequency,
        })
        .collect();
    Ok(OffsetTable { anchor, entries })
}

/// Votes collected by the offsets on one side of the anchor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccumulatorState {
    pub side: Side,
    /// `votes[i]` belongs to offset magnitude `i + 1`.
    pub votes: Vec<u32>,
}

impl AccumulatorState {
    /// Votes for offset magnitude `offset` (1-based); zero outside the array.
    pub fn votes_at(&self, offset: usize) -> u32 {
        offset
            .checked_sub(1)
            .and_then(|i| self.votes.get(i))
            .copied()
            .unwrap_or(0)
    }
}

pub fn build_side_accumulator(table: &OffsetTable, side: Side) -> AccumulatorState {
    let order = table.side_offsets(side);
    AccumulatorState {
        side,
        votes: accumulate_votes(&order),
    }
}

/// Runs the vote loop over offset magnitudes given in decreasing-frequency order.
fn accumulate_votes(order: &[u8]) -> Vec<u32> {
    let Some(&max_offset) = order.iter().max() else {
        return Vec::new();
    };
    let max_offset = max_offset as usize;
    // rank[e] = position of offset e in `order`
    let mut rank = [usize::MAX; 257];
    for (i, &e) in order.iter().enumerate() {
        rank[e as usize] = i;
    }
    let mut votes = vec![0u32; max_offset];
    let mut current = 1usize;
    while current < max_offset {
        let f = rank[current];
        if f == usize::MAX {
            // zero-frequency offset: nothing to look up, move on
            current += 1;
            continue;
        }
        // the working set is order[..=f]; skip over the run present in it
        loop {
            let extends_run = rank[current + 1] <= f;
            current += 1;
            if !extends_run {
                break;
            }
        }
        for &e in &order[..=f] {
            if e as usize > current {
                votes[e as usize - 1] += 1;
            }
        }
    }
    votes
}

/// Frequency-weighted votes for one side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoredSide {
    pub side: Side,
    pub anchor: u8,
    /// `votes[i]` and `scores[i]` belong to offset magnitude `i + 1`.
    pub votes: Vec<u32>,
    pub scores: Vec<u64>,
}

impl ScoredSide {
    /// Mean score over the offsets that received at least one vote.
    pub fn voted_mean(&self) -> Option<f64> {
        let (sum, n) = self
            .votes
            .iter()
            .zip(&self.scores)
            .filter(|(&v, _)| v > 0)
            .fold((0u64, 0u64), |(s, n), (_, &score)| (s + score, n + 1));
        (n > 0).then(|| sum as f64 / n as f64)
    }

    /// Offsets whose score exceeds [`voted_mean`](Self::voted_mean).
    pub fn kept_offsets(&self) -> Vec<usize> {
        let Some(mean) = self.voted_mean() else {
            return Vec::new();
        };
        self.scores
            .iter()
            .enumerate()
            .filter(|(_, &s)| s as f64 > mean)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Multiplies each offset's votes by the frequency of its intensity bin.
pub fn scale_accumulator(
    acc: &AccumulatorState,
    hist: &Histogram,
    table: &OffsetTable,
) -> ScoredSide {
    let anchor = table.anchor();
    let scores = acc
        .votes
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v == 0 {
                0
            } else {
                v as u64 * hist.count(acc.side.intensity(anchor, i + 1))
            }
        })
        .collect();
    ScoredSide {
        side: acc.side,
        anchor,
        votes: acc.votes.clone(),
        scores,
    }
}

/// Intensities that survived mean thresholding, plus the anchor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeakMask {
    pub anchor: u8,
    pub kept: [bool; 256],
}

impl PeakMask {
    pub fn intensities(&self) -> Vec<u8> {
        (0..=255u8).filter(|&v| self.kept[v as usize]).collect()
    }
}

/// Thresholds each side at its own voted mean and joins both around the anchor.
pub fn threshold_and_join(left: &ScoredSide, right: &ScoredSide) -> PeakMask {
    debug_assert_eq!(left.anchor, right.anchor);
    let anchor = right.anchor;
    let mut kept = [false; 256];
    kept[anchor as usize] = true;
    for side in [left, right] {
        for offset in side.kept_offsets() {
            kept[side.side.intensity(anchor, offset) as usize] = true;
        }
    }
    PeakMask { anchor, kept }
}

/// Per-intensity score table assembled from both sides; the anchor scores 0.
pub fn joined_scores(left: &ScoredSide, right: &ScoredSide) -> [u64; 256] {
    let mut out = [0u64; 256];
    for side in [left, right] {
        for (i, &s) in side.scores.iter().enumerate() {
            out[side.side.intensity(side.anchor, i + 1) as usize] = s;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Peak {
    pub intensity: u8,
    pub score: u64,
}

/// Detected material peaks in increasing intensity order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeakSet {
    peaks: Vec<Peak>,
}

impl PeakSet {
    /// Builds a peak set; intensities must be strictly increasing and non-empty.
    pub fn new(peaks: Vec<Peak>) -> Result<Self> {
        if peaks.is_empty() {
            return Err(Error::InvalidParameter("peak set must not be empty".into()));
        }
        if peaks.windows(2).any(|w| w[0].intensity >= w[1].intensity) {
            return Err(Error::InvalidParameter(
                "peak intensities must be strictly increasing".into(),
            ));
        }
        Ok(Self { peaks })
    }

    /// Peak set from bare intensities, all with score 0.
    pub fn from_intensities(intensities: &[u8]) -> Result<Self> {
        Self::new(
            intensities
                .iter()
                .map(|&intensity| Peak {
                    intensity,
                    score: 0,
                })
                .collect(),
        )
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn intensities(&self) -> Vec<u8> {
        self.peaks.iter().map(|p| p.intensity).collect()
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

/// Collapses each run of consecutive kept intensities into one peak.
///
/// A run's peak is its highest-scoring intensity (lowest on ties), except that
/// the run containing the anchor is always represented by the anchor.
pub fn merge_contiguous_peaks(mask: &PeakMask, scores: &[u64; 256]) -> PeakSet {
    let mut peaks = Vec::new();
    let mut v = 0usize;
    while v < 256 {
        if !mask.kept[v] {
            v += 1;
            continue;
        }
        let start = v;
        while v < 256 && mask.kept[v] {
            v += 1;
        }
        let run = start..v;
        let best = if run.contains(&(mask.anchor as usize)) {
            mask.anchor as usize
        } else {
            // max_by_key returns the last maximum, so scan in reverse
            run.clone().rev().max_by_key(|&i| scores[i]).unwrap()
        };
        peaks.push(Peak {
            intensity: best as u8,
            score: scores[best],
        });
    }
    PeakSet { peaks }
}

/// Every intermediate product of [`detect_peaks`], for inspection and plotting.
#[derive(Clone, Debug)]
pub struct PeakTrace {
    pub table: OffsetTable,
    pub left: ScoredSide,
    pub right: ScoredSide,
    pub mask: PeakMask,
    pub peaks: PeakSet,
}

impl PeakTrace {
    /// One `(intensity, frequency, votes, score, kept)` row per intensity.
    pub fn rows<'a>(
        &'a self,
        hist: &'a Histogram,
    ) -> impl Iterator<Item = (u8, u64, u32, u64, bool)> + 'a {
        let scores = joined_scores(&self.left, &self.right);
        let anchor = self.table.anchor() as usize;
        (0..=255u8).map(move |v| {
            let i = v as usize;
            let votes = if i > anchor {
                self.right.votes.get(i - anchor - 1).copied().unwrap_or(0)
            } else if i < anchor {
                self.left.votes.get(anchor - i - 1).copied().unwrap_or(0)
            } else {
                0
            };
            (v, hist.count(v), votes, scores[i], self.mask.kept[i])
        })
    }
}

pub fn detect_peaks_traced(hist: &Histogram) -> Result<PeakTrace> {
    let table = build_offset_table(hist)?;
    let left = scale_accumulator(
        &build_side_accumulator(&table, Side::Negative),
        hist,
        &table,
    );
    let right = scale_accumulator(
        &build_side_accumulator(&table, Side::Positive),
        hist,
        &table,
    );
    let mask = threshold_and_join(&left, &right);
    let peaks = merge_contiguous_peaks(&mask, &joined_scores(&left, &right));
    Ok(PeakTrace {
        table,
        left,
        right,
        mask,
        peaks,
    })
}

/// Material peaks of `hist`.
pub fn detect_peaks(hist: &Histogram) -> Result<PeakSet> {
    detect_peaks_traced(hist).map(|t| t.peaks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_of(pairs: &[(u8, u64)]) -> (Histogram, OffsetTable) {
        let h = Histogram::from_pairs(pairs.iter().copied());
        let t = build_offset_table(&h).unwrap();
        (h, t)
    }

    #[test]
    fn offset_table_order() {
        let (_, t) = table_of(&[(100, 50), (120, 30), (90, 10)]);
        assert_eq!(t.anchor(), 100);
        let e: Vec<_> = t
            .entries()
            .iter()
            .map(|e| (e.offset, e.frequency))
            .collect();
        assert_eq!(e, vec![(0, 50), (20, 30), (-10, 10)]);
    }

    #[test]
    fn offset_table_ties() {
        let (_, t) = table_of(&[(40, 7), (20, 7), (30, 3), (10, 3)]);
        assert_eq!(t.anchor(), 20);
        let e: Vec<_> = t.entries().iter().map(|e| e.offset).collect();
        assert_eq!(e, vec![0, 20, -10, 10]);
    }

    #[test]
    fn empty_histogram_is_an_error() {
        assert!(matches!(
            build_offset_table(&Histogram::from_counts([0; 256])),
            Err(Error::EmptyHistogram)
        ));
        assert!(detect_peaks(&Histogram::from_counts([0; 256])).is_err());
    }

    #[test]
    fn single_bin() {
        let (h, t) = table_of(&[(77, 9)]);
        assert_eq!(
            t.entries(),
            &[OffsetEntry {
                offset: 0,
                frequency: 9
            }]
        );
        assert!(build_side_accumulator(&t, Side::Positive).votes.is_empty());
        assert_eq!(detect_peaks(&h).unwrap().intensities(), vec![77]);
    }

    #[test]
    fn vote_loop_trace() {
        // order [5, 1, 2]:
        //   current=1, f=1, set {5,1}: 2 absent -> current=2; 5 > 2 votes
        //   current=2, f=2, set {5,1,2}: 3 absent -> current=3; 5 > 3 votes
        //   current=3, 4 absent from the order; current=5 ends the loop
        assert_eq!(accumulate_votes(&[5, 1, 2]), vec![0, 0, 0, 0, 2]);
        assert_eq!(accumulate_votes(&[1]), vec![0]);
        assert!(accumulate_votes(&[]).is_empty());
    }

    #[test]
    fn scaling_multiplies_by_frequency() {
        let (h, t) = table_of(&[(100, 90), (101, 40), (105, 30)]);
        let acc = build_side_accumulator(&t, Side::Positive);
        let scored = scale_accumulator(&acc, &h, &t);
        for (i, (&v, &s)) in acc.votes.iter().zip(&scored.scores).enumerate() {
            assert_eq!(s, v as u64 * h.count(100 + i as u8 + 1));
        }
        assert_eq!(scored.scores[4], acc.votes[4] as u64 * 30);
    }

    fn side(side: Side, anchor: u8, votes: Vec<u32>, scores: Vec<u64>) -> ScoredSide {
        ScoredSide {
            side,
            anchor,
            votes,
            scores,
        }
    }

    #[test]
    fn threshold_on_voted_mean() {
        let right = side(
            Side::Positive,
            100,
            vec![0, 0, 1, 1, 0],
            vec![0, 0, 30, 28, 0],
        );
        let left = side(Side::Negative, 100, vec![], vec![]);
        assert_eq!(right.voted_mean(), Some(29.0));
        let mask = threshold_and_join(&left, &right);
        assert_eq!(mask.intensities(), vec![100, 103]);
    }

    #[test]
    fn threshold_with_no_votes_keeps_anchor() {
        let left = side(Side::Negative, 50, vec![0, 0], vec![0, 0]);
        let right = side(Side::Positive, 50, vec![0], vec![0]);
        assert_eq!(threshold_and_join(&left, &right).intensities(), vec![50]);
    }

    #[test]
    fn symmetric_sides_give_symmetric_mask() {
        let votes = vec![0, 1, 2, 1];
        let scores = vec![0, 10, 40, 12];
        let left = side(Side::Negative, 128, votes.clone(), scores.clone());
        let right = side(Side::Positive, 128, votes, scores);
        let kept = threshold_and_join(&left, &right).intensities();
        assert_eq!(kept, vec![125, 128, 131]);
    }

    #[test]
    fn contiguous_runs_merge() {
        let mut kept = [false; 256];
        for v in [100, 140, 141, 142, 200] {
            kept[v] = true;
        }
        let mut scores = [0u64; 256];
        scores[140] = 5;
        scores[141] = 9;
        scores[142] = 9;
        scores[200] = 1;
        let mask = PeakMask { anchor: 100, kept };
        let peaks = merge_contiguous_peaks(&mask, &scores);
        assert_eq!(peaks.intensities(), vec![100, 141, 200]);
    }

    #[test]
    fn anchor_run_is_represented_by_anchor() {
        let mut kept = [false; 256];
        kept[99] = true;
        kept[100] = true;
        kept[101] = true;
        let mut scores = [0u64; 256];
        scores[101] = 1000;
        let peaks = merge_contiguous_peaks(&PeakMask { anchor: 100, kept }, &scores);
        assert_eq!(peaks.intensities(), vec![100]);
    }

    #[test]
    fn two_deltas() {
        // the only positive offset has no smaller offset to vote for it, so
        // its score is 0 and it never clears the mean of the voted offsets
        let h = Histogram::from_pairs([(50, 1000), (180, 900)]);
        assert_eq!(detect_peaks(&h).unwrap().intensities(), vec![50]);
    }

    #[test]
    fn peak_set_validation() {
        assert!(PeakSet::from_intensities(&[]).is_err());
        assert!(PeakSet::from_intensities(&[5, 5]).is_err());
        assert!(PeakSet::from_intensities(&[5, 6]).is_ok());
    }
}
