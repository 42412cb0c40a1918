//! Pixel containers shared by every stage of the pipeline.
//!
//! All rasters are row-major: pixel `(row, col)` lives at `row * width + col`.

use crate::error::{Error, Result};

/// 8-bit single-channel raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image with every pixel set to `value`.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(row, col));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Slice of one pixel row.
    pub fn row(&self, row: usize) -> &[u8] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// 256-bin intensity frequency table.
#[derive(Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: [u64; 256],
}

impl Histogram {
    pub fn from_counts(counts: [u64; 256]) -> Self {
        Self { counts }
    }

    /// Builds a histogram from `(intensity, count)` pairs. Repeated intensities accumulate.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, u64)>) -> Self {
        let mut counts = [0u64; 256];
        for (v, n) in pairs {
            counts[v as usize] += n;
        }
        Self { counts }
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    #[inline]
    pub fn count(&self, intensity: u8) -> u64 {
        self.counts[intensity as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Number of bins with a non-zero count.
    pub fn support(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Non-zero bins in increasing intensity order.
    pub fn nonzero(&self) -> impl Iterator<Item = (u8, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(v, &c)| (v as u8, c))
    }

    /// Probability vector; all zeros for an empty histogram.
    pub fn normalized(&self) -> [f64; 256] {
        let total = self.total();
        let mut p = [0.0; 256];
        if total > 0 {
            for (dst, &c) in p.iter_mut().zip(self.counts.iter()) {
                *dst = c as f64 / total as f64;
            }
        }
        p
    }
}

impl std::fmt::Debug for Histogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.nonzero()).finish()
    }
}

/// Frequency of every intensity in `img`.
pub fn compute_histogram(img: &GrayImage) -> Histogram {
    let mut counts = [0u64; 256];
    for &v in img.pixels() {
        counts[v as usize] += 1;
    }
    Histogram { counts }
}

/// Per-pixel region index together with the number of regions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    num_labels: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, num_labels: usize, labels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "label map {width}x{height} with {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_labels) {
            return Err(Error::InvalidImage(format!(
                "label {bad} out of range for {num_labels} regions"
            )));
        }
        Ok(Self {
            width,
            height,
            num_labels,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Number of regions `K`; every label is `< K`.
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    /// Pixel count per label.
    pub fn label_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_labels];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}
