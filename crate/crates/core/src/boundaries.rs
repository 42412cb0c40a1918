//! Decision boundaries between detected peaks, and labeling by intensity interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Histogram, LabelMap};
use crate::peaks::PeakSet;

/// How the boundary between two adjacent peaks is placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryRule {
    /// Nearest peak wins; midpoints go to the lower peak.
    Distance,
    /// Least frequent intensity strictly between the peaks.
    #[default]
    Histogram,
}

impl std::str::FromStr for BoundaryRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(Self::Distance),
            "histogram" => Ok(Self::Histogram),
            other => Err(Error::InvalidParameter(format!(
                "boundary rule must be `distance` or `histogram`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for BoundaryRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Distance => "distance",
            Self::Histogram => "histogram",
        })
    }
}

/// Inclusive intensity interval assigned to one material.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub lower: u8,
    pub upper: u8,
    pub peak: u8,
}

impl Region {
    pub fn contains(&self, v: u8) -> bool {
        (self.lower..=self.upper).contains(&v)
    }
}

/// Ordered intervals partitioning `[0, 255]`, one per peak.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMap {
    regions: Vec<Region>,
}

impl RegionMap {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        let (Some(first), Some(last)) = (regions.first(), regions.last()) else {
            return invalid("region map must not be empty".into());
        };
        if first.lower != 0 || last.upper != 255 {
            return invalid("regions must cover 0..=255".into());
        }
        for r in &regions {
            if r.lower > r.upper || !r.contains(r.peak) {
                return invalid(format!("malformed region {r:?}"));
            }
        }
        for w in regions.windows(2) {
            if w[0].upper as u16 + 1 != w[1].lower as u16 {
                return invalid(format!(
                    "regions {:?} and {:?} are not contiguous",
                    w[0], w[1]
                ));
            }
        }
        Ok(Self { regions })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Region index for every intensity.
    pub fn lookup_table(&self) -> [u16; 256] {
        let mut lut = [0u16; 256];
        for (i, r) in self.regions.iter().enumerate() {
            lut[r.lower as usize..=r.upper as usize].fill(i as u16);
        }
        lut
    }

    pub fn region_of(&self, v: u8) -> usize {
        self.regions
            .iter()
            .position(|r| r.contains(v))
            .expect("regions cover every intensity")
    }

    /// Regions from the last intensity of each region but the final one.
    fn from_uppers(peaks: &PeakSet, uppers: impl IntoIterator<Item = u8>) -> Self {
        let mut regions = Vec::with_capacity(peaks.len());
        let mut lower = 0u8;
        let mut uppers = uppers.into_iter();
        for p in peaks.peaks() {
            let upper = uppers.next().unwrap_or(255);
            regions.push(Region {
                lower,
                upper,
                peak: p.intensity,
            });
            lower = upper.saturating_add(1);
        }
        Self { regions }
    }
}

pub fn boundaries_distance(peaks: &PeakSet) -> RegionMap {
    let uppers = peaks
        .peaks()
        .windows(2)
        .map(|w| ((w[0].intensity as u16 + w[1].intensity as u16) / 2) as u8);
    RegionMap::from_uppers(peaks, uppers)
}

/// Boundaries at the least frequent intensity between adjacent peaks.
///
/// `hist` should be the histogram the peaks were detected on. When two peaks
/// are adjacent intensities the lower peak is its own boundary.
pub fn boundaries_histogram(peaks: &PeakSet, hist: &Histogram) -> RegionMap {
    let uppers = peaks.peaks().windows(2).map(|w| {
        let (lo, hi) = (w[0].intensity, w[1].intensity);
        // min_by_key keeps the first minimum, i.e. the lowest intensity
        (lo + 1..hi).min_by_key(|&v| hist.count(v)).unwrap_or(lo)
    });
    RegionMap::from_uppers(peaks, uppers)
}

pub fn boundaries(rule: BoundaryRule, peaks: &PeakSet, hist: &Histogram) -> RegionMap {
    match rule {
        BoundaryRule::Distance => boundaries_distance(peaks),
        BoundaryRule::Histogram => boundaries_histogram(peaks, hist),
    }
}

/// Labels every pixel with the index of the region holding its intensity.
pub fn segment(img: &GrayImage, regions: &RegionMap) -> LabelMap {
    let lut = regions.lookup_table();
    let labels = img.pixels().iter().map(|&v| lut[v as usize]).collect();
    LabelMap::new(img.width(), img.height(), regions.len(), labels)
        .expect("lookup table only yields valid region indices")
}
