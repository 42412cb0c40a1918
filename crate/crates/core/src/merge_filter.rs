//! Merge filtering and histogram estimation.
//!
//! The image is cut into horizontal bands `k` pixel rows tall, and every band
//! is tiled left to right by non-overlapping `k x k` blocks. For each band the
//! absolute differences between consecutive block medians are tabulated, a
//! merge threshold `tau` is selected from that table, and runs of consecutive
//! blocks whose medians differ by less than `tau` are flattened to the median
//! of all their pixels. The histogram of the flattened image is the estimated
//! histogram used for peak detection.
//!
//! Bands are independent of each other and are processed in parallel.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{compute_histogram, GrayImage, Histogram};

/// Side length of the square merge kernel. Always at least 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KernelSize(usize);

impl KernelSize {
    pub const DEFAULT: KernelSize = KernelSize(2);

    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::KernelTooSmall(k));
        }
        Ok(Self(k))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Checks that the kernel fits inside `img`.
    pub fn check_fits(self, img: &GrayImage) -> Result<()> {
        if self.0 > img.width().min(img.height()) {
            return Err(Error::KernelTooLarge {
                kernel: self.0,
                width: img.width(),
                height: img.height(),
            });
        }
        Ok(())
    }

    /// Number of bands needed to cover `height` rows.
    pub fn band_count(self, height: usize) -> usize {
        height.div_ceil(self.0)
    }
}

impl Default for KernelSize {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Median of one block of a band.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchMedian {
    pub band_index: usize,
    pub block_index: usize,
    pub median: u8,
    /// Pixel rows covered by the block.
    pub rows: Range<usize>,
    /// Pixel columns covered by the block.
    pub cols: Range<usize>,
}

impl PatchMedian {
    pub fn pixel_count(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

/// Lower median: for an even number of values, the smaller of the two central ones.
pub fn lower_median(values: &mut [u8]) -> u8 {
    assert!(!values.is_empty(), "median of an empty set");
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable(mid).1
}

/// Lower median of a 256-bin count table holding `total` samples.
fn median_of_counts(counts: &[u32; 256], total: u32) -> u8 {
    let target = (total - 1) / 2;
    let mut seen = 0;
    for (v, &c) in counts.iter().enumerate() {
        seen += c;
        if seen > target {
            return v as u8;
        }
    }
    unreachable!("median target beyond total count")
}

/// Medians of the blocks tiling band `band`, left to right.
///
/// The last block of a band is narrower than `k` when the width is not a
/// multiple of `k`, and the bottom band is shorter than `k` when the height is
/// not; partial blocks take their median over the pixels they actually cover.
pub fn patch_medians(img: &GrayImage, band: usize, kernel: KernelSize) -> Result<Vec<PatchMedian>> {
    let k = kernel.get();
    if band * k >= img.height() {
        return Err(Error::BandOutOfRange {
            band,
            height: img.height(),
            kernel: k,
        });
    }
    let rows = band * k..((band + 1) * k).min(img.height());
    let mut scratch = Vec::with_capacity(k * k);
    let medians = (0..img.width().div_ceil(k))
        .map(|block| {
            let cols = block * k..((block + 1) * k).min(img.width());
            scratch.clear();
            for r in rows.clone() {
                scratch.extend_from_slice(&img.row(r)[cols.clone()]);
            }
            PatchMedian {
                band_index: band,
                block_index: block,
                median: lower_median(&mut scratch),
                rows: rows.clone(),
                cols,
            }
        })
        .collect();
    Ok(medians)
}

/// Frequency table of absolute differences between consecutive block medians.
///
/// `alpha` holds the distinct differences in increasing order and `beta[i]`
/// how often `alpha[i]` occurs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DifferenceDistribution {
    pub alpha: Vec<u8>,
    pub beta: Vec<u64>,
}

impl DifferenceDistribution {
    pub fn from_medians(medians: &[u8]) -> Self {
        let mut freq = [0u64; 256];
        for pair in medians.windows(2) {
            freq[pair[0].abs_diff(pair[1]) as usize] += 1;
        }
        let (alpha, beta) = freq
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(d, &n)| (d as u8, n))
            .unzip();
        Self { alpha, beta }
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Total number of tabulated differences.
    pub fn total(&self) -> u64 {
        self.beta.iter().sum()
    }
}

pub fn difference_distribution(medians: &[PatchMedian]) -> DifferenceDistribution {
    let values: Vec<u8> = medians.iter().map(|m| m.median).collect();
    DifferenceDistribution::from_medians(&values)
}

/// Median-difference threshold below which consecutive blocks merge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct MergeThreshold(pub u8);

impl MergeThreshold {
    pub fn get(self) -> u8 {
        self.0
    }
}

/// How the merge threshold is read off the objective `beta[i] * (1 - alpha[i])`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ThresholdRule {
    /// `tau` is the minimum objective value itself, clamped to `0..=255`.
    ///
    /// Any band with a median difference of 2 or more has a negative minimum,
    /// so merging only happens in bands whose blocks all share one median.
    #[default]
    MinimumValue,
    /// `tau` is the difference `alpha[i*]` at which the objective is minimal,
    /// ties going to the smaller difference.
    ///
    /// In bands of a few hundred blocks a single large edge outweighs the
    /// noise differences and `tau` lands on the edge height.
    ArgminDifference,
}

impl std::str::FromStr for ThresholdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-value" => Ok(Self::MinimumValue),
            "argmin" => Ok(Self::ArgminDifference),
            other => Err(Error::InvalidParameter(format!(
                "threshold rule must be `min-value` or `argmin`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::MinimumValue => "min-value",
            Self::ArgminDifference => "argmin",
        })
    }
}

/// Merge threshold of one band under the default [`ThresholdRule`].
pub fn merge_threshold(dist: &DifferenceDistribution) -> MergeThreshold {
    merge_threshold_with(dist, ThresholdRule::default())
}

/// Merge threshold of one band. An empty table gives `tau = 0` under either rule.
pub fn merge_threshold_with(dist: &DifferenceDistribution, rule: ThresholdRule) -> MergeThreshold {
    // alpha is ascending, so strict `<` keeps the smaller alpha on ties
    let mut best: Option<(i64, u8)> = None;
    for (&a, &b) in dist.alpha.iter().zip(&dist.beta) {
        let objective = b as i64 * (1 - a as i64);
        if best.is_none_or(|(o, _)| objective < o) {
            best = Some((objective, a));
        }
    }
    let tau = match (rule, best) {
        (_, None) => 0,
        (ThresholdRule::MinimumValue, Some((objective, _))) => objective.clamp(0, 255) as u8,
        (ThresholdRule::ArgminDifference, Some((_, a))) => a,
    };
    MergeThreshold(tau)
}

/// Groups consecutive blocks in a single left-to-right pass.
///
/// Block `i + 1` joins the open group when its median differs from block `i`
/// (the last member of that group) by strictly less than `tau`.
pub fn group_blocks(medians: &[PatchMedian], tau: MergeThreshold) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..medians.len() {
        if medians[i].median.abs_diff(medians[i - 1].median) >= tau.get() {
            groups.push(start..i);
            start = i;
        }
    }
    if !medians.is_empty() {
        groups.push(start..medians.len());
    }
    groups
}

/// Flattens every merged group of `medians` to the median of its raw pixels.
///
/// `out_band` is the output storage for this band only: the rows covered by
/// `medians`, row-major with the image's width.
pub fn merge_band(
    img: &GrayImage,
    medians: &[PatchMedian],
    tau: MergeThreshold,
    out_band: &mut [u8],
) {
    let Some(first) = medians.first() else {
        return;
    };
    let width = img.width();
    let row0 = first.rows.start;
    debug_assert_eq!(out_band.len(), first.rows.len() * width);

    let mut counts = [0u32; 256];
    for group in group_blocks(medians, tau) {
        counts.fill(0);
        let blocks = &medians[group];
        let rows = blocks[0].rows.clone();
        let cols = blocks[0].cols.start..blocks[blocks.len() - 1].cols.end;
        for r in rows.clone() {
            for &v in &img.row(r)[cols.clone()] {
                counts[v as usize] += 1;
            }
        }
        let total = (rows.len() * cols.len()) as u32;
        let value = median_of_counts(&counts, total);
        for r in rows {
            let base = (r - row0) * width;
            out_band[base + cols.start..base + cols.end].fill(value);
        }
    }
}

/// Threshold and merged groups chosen for one band; see [`filter_image_traced`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BandTrace {
    pub band_index: usize,
    pub distribution: DifferenceDistribution,
    pub tau: MergeThreshold,
    pub groups: Vec<Range<usize>>,
}

fn filter_band(
    img: &GrayImage,
    band: usize,
    kernel: KernelSize,
    rule: ThresholdRule,
    out_band: &mut [u8],
) -> BandTrace {
    let medians = patch_medians(img, band, kernel).expect("band index derived from height");
    let distribution = difference_distribution(&medians);
    let tau = merge_threshold_with(&distribution, rule);
    merge_band(img, &medians, tau, out_band);
    BandTrace {
        band_index: band,
        groups: group_blocks(&medians, tau),
        distribution,
        tau,
    }
}

/// Merge-filters every band of `img` and records what each band did.
pub fn filter_image_traced(
    img: &GrayImage,
    kernel: KernelSize,
    rule: ThresholdRule,
) -> Result<(GrayImage, Vec<BandTrace>)> {
    kernel.check_fits(img)?;
    let band_len = kernel.get() * img.width();
    let mut out = vec![0u8; img.pixels().len()];
    let traces = out
        .par_chunks_mut(band_len)
        .enumerate()
        .map(|(band, out_band)| filter_band(img, band, kernel, rule, out_band))
        .collect();
    Ok((GrayImage::new(img.width(), img.height(), out)?, traces))
}

/// Merge-filters every band of `img` with the default threshold rule.
pub fn filter_image(img: &GrayImage, kernel: KernelSize) -> Result<GrayImage> {
    filter_image_with(img, kernel, ThresholdRule::default())
}

pub fn filter_image_with(
    img: &GrayImage,
    kernel: KernelSize,
    rule: ThresholdRule,
) -> Result<GrayImage> {
    filter_image_traced(img, kernel, rule).map(|(out, _)| out)
}

/// Histogram of the merge-filtered image.
pub fn estimate_histogram(img: &GrayImage, kernel: KernelSize) -> Result<Histogram> {
    Ok(compute_histogram(&filter_image(img, kernel)?))
}
