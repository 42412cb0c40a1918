//! Histogram-based auto segmentation for grayscale SEM images of integrated circuits.
//!
//! The pipeline has three stages:
//!
//! 1. [`merge_filter`] flattens runs of similar `k x k` blocks band by band and
//!    yields an estimated histogram with the noise largely removed.
//! 2. [`peaks`] finds the material peaks of that histogram with a vote accumulator.
//! 3. [`boundaries`](mod@boundaries) places a decision boundary between adjacent peaks and labels
//!    the filtered image.
//!
//! [`eval`] scores the result against ground truth alongside classical
//! baseline filters, and [`synth`] generates phantoms with known labels.

pub mod boundaries;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod merge_filter;
pub mod peaks;
pub mod synth;

pub use boundaries::{boundaries, segment, BoundaryRule, Region, RegionMap};
pub use error::{Error, Result};
pub use image::{compute_histogram, GrayImage, Histogram, LabelMap};
pub use merge_filter::{
    estimate_histogram, filter_image, filter_image_with, KernelSize, ThresholdRule,
};
pub use peaks::{detect_peaks, Peak, PeakSet};

/// Output of [`run_pipeline`].
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub filtered: GrayImage,
    pub estimated: Histogram,
    pub peaks: PeakSet,
    pub regions: RegionMap,
    pub labels: LabelMap,
}

/// Settings for [`run_pipeline`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PipelineConfig {
    pub kernel: KernelSize,
    pub boundary: BoundaryRule,
    pub threshold: ThresholdRule,
    /// Label the raw pixels instead of the filtered ones, with the same regions.
    pub label_raw: bool,
}

/// Runs filter, peak detection, boundary placement and labeling on `img`.
pub fn run_pipeline(img: &GrayImage, config: &PipelineConfig) -> Result<Segmentation> {
    let filtered = filter_image_with(img, config.kernel, config.threshold)?;
    let estimated = compute_histogram(&filtered);
    let peaks = detect_peaks(&estimated)?;
    let regions = boundaries(config.boundary, &peaks, &estimated);
    let labels = segment(if config.label_raw { img } else { &filtered }, &regions);
    Ok(Segmentation {
        filtered,
        estimated,
        peaks,
        regions,
        labels,
    })
}
