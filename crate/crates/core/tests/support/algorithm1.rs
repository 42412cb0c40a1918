//! Line-by-line interpreter of the peak-voting algorithm.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;

/// Everything the interpreter computed for one histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub anchor: u8,
    /// Offset magnitudes of each side in frequency order: `[negative, positive]`.
    pub order: [Vec<u8>; 2],
    /// Votes per offset magnitude, only offsets that appear in the side.
    pub votes: [BTreeMap<u8, u32>; 2],
    /// `votes * frequency` per offset magnitude.
    pub scores: [BTreeMap<u8, u64>; 2],
    /// Absolute intensities surviving the threshold, anchor included.
    pub mask: Vec<u8>,
    pub peaks: Vec<u8>,
}

fn intensity(anchor: u8, side: usize, offset: u8) -> u8 {
    if side == 0 {
        anchor - offset
    } else {
        anchor + offset
    }
}

/// Runs the algorithm on a 256-bin histogram. Panics on an empty histogram.
pub fn run(counts: &[u64; 256]) -> Run {
    // step 1: non-empty bins, most frequent first; equal counts by intensity
    let mut bins: Vec<(u8, u64)> = Vec::new();
    for v in 0..256usize {
        if counts[v] > 0 {
            bins.push((v as u8, counts[v]));
        }
    }
    assert!(!bins.is_empty());
    for i in 1..bins.len() {
        let mut j = i;
        while j > 0
            && (bins[j - 1].1 < bins[j].1
                || (bins[j - 1].1 == bins[j].1 && bins[j - 1].0 > bins[j].0))
        {
            bins.swap(j - 1, j);
            j -= 1;
        }
    }
    // step 2: the global maximum is the anchor, every bin becomes an offset
    let anchor = bins[0].0;

    let mut order: [Vec<u8>; 2] = [Vec::new(), Vec::new()];
    for &(v, _) in &bins {
        if v < anchor {
            order[0].push(anchor - v);
        } else if v > anchor {
            order[1].push(v - anchor);
        }
    }

    let mut votes: [BTreeMap<u8, u32>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for side in 0..2 {
        let f_list = &order[side];
        for &e in f_list {
            votes[side].insert(e, 0);
        }
        if f_list.is_empty() {
            continue;
        }
        let max_f = *f_list.iter().max().unwrap() as u32;
        let mut current: u32 = 1;
        while current < max_f {
            // find the index of currentIntensity in F; absent values are stepped over
            let Some(f) = f_list.iter().position(|&e| e as u32 == current) else {
                current += 1;
                continue;
            };
            let g = &f_list[..=f];
            // skip the run of consecutive intensities present in G
            while g.iter().any(|&e| e as u32 == current) {
                current += 1;
            }
            // one vote for every member of G beyond the run
            for &e in g {
                if e as u32 > current {
                    *votes[side].get_mut(&e).unwrap() += 1;
                }
            }
        }
    }

    // scale by the frequency of the offset's bin
    let mut scores: [BTreeMap<u8, u64>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for side in 0..2 {
        for (&e, &n) in &votes[side] {
            let v = intensity(anchor, side, e);
            scores[side].insert(e, n as u64 * counts[v as usize]);
        }
    }

    // threshold each side at the mean over voted offsets, strictly above
    let mut mask = vec![anchor];
    for side in 0..2 {
        let mut sum = 0u64;
        let mut n = 0u64;
        for (&e, &s) in &scores[side] {
            if votes[side][&e] > 0 {
                sum += s;
                n += 1;
            }
        }
        if n == 0 {
            continue;
        }
        for (&e, &s) in &scores[side] {
            // s > sum / n without division
            if s * n > sum {
                mask.push(intensity(anchor, side, e));
            }
        }
    }
    mask.sort();

    // collapse touching intensities into one peak each
    let score_of = |v: u8| -> u64 {
        if v < anchor {
            scores[0][&(anchor - v)]
        } else if v > anchor {
            scores[1][&(v - anchor)]
        } else {
            0
        }
    };
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        let mut j = i;
        while j + 1 < mask.len() && mask[j + 1] as u32 == mask[j] as u32 + 1 {
            j += 1;
        }
        let run = &mask[i..=j];
        if run.contains(&anchor) {
            peaks.push(anchor);
        } else {
            let mut best = run[0];
            for &v in run {
                if score_of(v) > score_of(best) {
                    best = v;
                }
            }
            peaks.push(best);
        }
        i = j + 1;
    }

    Run {
        anchor,
        order,
        votes,
        scores,
        mask,
        peaks,
    }
}
