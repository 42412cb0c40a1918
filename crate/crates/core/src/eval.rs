//! Ground-truth separation scoring and the baseline filters it compares against.
//!
//! A method is scored by splitting its processed image into foreground and
//! background intensity distributions using a binary ground truth and taking
//! the L1 (Manhattan) distance between the two probability vectors. Scores lie
//! in `[0, 2]`; higher means the method leaves the classes better separated.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMap};
use crate::merge_filter::{filter_image, KernelSize};

/// Binary per-pixel foreground mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl GroundTruth {
    /// Requires at least one foreground and one background pixel.
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || mask.len() != width * height {
            return Err(Error::InvalidGroundTruth(format!(
                "{width}x{height} mask with {} entries",
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyClass("foreground"));
        }
        if mask.iter().all(|&m| m) {
            return Err(Error::EmptyClass("background"));
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    /// Reads a mask image where 0 is background and 255 is foreground.
    pub fn from_image(img: &GrayImage) -> Result<Self> {
        if let Some(&v) = img.pixels().iter().find(|&&v| v != 0 && v != 255) {
            return Err(Error::InvalidGroundTruth(format!(
                "mask pixels must be 0 or 255, found {v}"
            )));
        }
        Self::new(
            img.width(),
            img.height(),
            img.pixels().iter().map(|&v| v == 255).collect(),
        )
    }

    /// Foreground wherever `is_foreground(label)` holds.
    pub fn from_labels(labels: &LabelMap, is_foreground: impl Fn(u16) -> bool) -> Result<Self> {
        Self::new(
            labels.width(),
            labels.height(),
            labels.labels().iter().map(|&l| is_foreground(l)).collect(),
        )
    }

    /// Mask image with background 0 and foreground 255.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(
            self.width,
            self.height,
            self.mask.iter().map(|&m| if m { 255 } else { 0 }).collect(),
        )
        .expect("mask dimensions are valid")
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

pub type Distribution = [f64; 256];

/// Normalized intensity distributions of the foreground and background pixels.
pub fn split_distributions(
    img: &GrayImage,
    gt: &GroundTruth,
) -> Result<(Distribution, Distribution)> {
    if img.dimensions() != gt.dimensions() {
        return Err(Error::DimensionMismatch {
            image: img.dimensions(),
            truth: gt.dimensions(),
        });
    }
    let mut fg = [0u64; 256];
    let mut bg = [0u64; 256];
    for (&v, &m) in img.pixels().iter().zip(gt.mask()) {
        if m {
            fg[v as usize] += 1;
        } else {
            bg[v as usize] += 1;
        }
    }
    let normalize = |counts: [u64; 256], class| -> Result<Distribution> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyClass(class));
        }
        Ok(counts.map(|c| c as f64 / total as f64))
    };
    Ok((normalize(fg, "foreground")?, normalize(bg, "background")?))
}

pub fn manhattan_separation(fg: &Distribution, bg: &Distribution) -> f64 {
    fg.iter().zip(bg).map(|(a, b)| (a - b).abs()).sum()
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`, `radius = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

#[inline]
fn clamp_index(i: i64, len: usize) -> usize {
    i.clamp(0, len as i64 - 1) as usize
}

fn to_gray(width: usize, height: usize, values: &[f64]) -> GrayImage {
    GrayImage::new(
        width,
        height,
        values
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect(),
    )
    .expect("same dimensions as the input")
}

/// Separable Gaussian smoothing with clamped edges.
pub fn baseline_gaussian(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be > 0, got {sigma}"
        )));
    }
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as i64;
    let (w, h) = img.dimensions();

    let mut horizontal = vec![0f64; w * h];
    horizontal
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(r, out)| {
            let row = img.row(r);
            for (c, o) in out.iter_mut().enumerate() {
                *o = taps
                    .iter()
                    .enumerate()
                    .map(|(t, &k)| k * row[clamp_index(c as i64 + t as i64 - radius, w)] as f64)
                    .sum();
            }
        });
    let mut vertical = vec![0f64; w * h];
    vertical.par_chunks_mut(w).enumerate().for_each(|(r, out)| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = taps
                .iter()
                .enumerate()
                .map(|(t, &k)| k * horizontal[clamp_index(r as i64 + t as i64 - radius, h) * w + c])
                .sum();
        }
    });
    Ok(to_gray(w, h, &vertical))
}

/// Classical sliding-window median filter (stride 1, clamped edges).
pub fn baseline_median(img: &GrayImage, window: usize) -> Result<GrayImage> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::EvenWindow(window));
    }
    let (w, h) = img.dimensions();
    let half = (window / 2) as i64;
    let mut out = vec![0u8; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(r, out_row)| {
        let mut scratch = Vec::with_capacity(window * window);
        for (c, o) in out_row.iter_mut().enumerate() {
            scratch.clear();
            for dr in -half..=half {
                let row = img.row(clamp_index(r as i64 + dr, h));
                for dc in -half..=half {
                    scratch.push(row[clamp_index(c as i64 + dc, w)]);
                }
            }
            let mid = scratch.len() / 2;
            *o = *scratch.select_nth_unstable(mid).1;
        }
    });
    GrayImage::new(w, h, out)
}

/// Perona-Malik diffusion parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiffusionParams {
    pub iterations: usize,
    pub kappa: f64,
    pub lambda: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            iterations: 10,
            kappa: 30.0,
            lambda: 0.2,
        }
    }
}

/// Perona-Malik anisotropic diffusion with conduction `exp(-(d / kappa)^2)`.
///
/// Four-neighbour scheme; neighbours outside the image are clamped to the
/// border pixel, so no flux crosses the boundary.
pub fn baseline_anisotropic_diffusion(
    img: &GrayImage,
    params: DiffusionParams,
) -> Result<GrayImage> {
    let DiffusionParams {
        iterations,
        kappa,
        lambda,
    } = params;
    if iterations == 0 {
        return Err(Error::InvalidParameter(
            "diffusion needs at least one iteration".into(),
        ));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa must be > 0, got {kappa}"
        )));
    }
    if !(lambda > 0.0 && lambda <= 0.25) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be in (0, 0.25], got {lambda}"
        )));
    }
    let (w, h) = img.dimensions();
    let conduction = |d: f64| (-(d / kappa) * (d / kappa)).exp();
    let mut cur: Vec<f64> = img.pixels().iter().map(|&v| v as f64).collect();
    let mut next = vec![0f64; w * h];
    for _ in 0..iterations {
        next.par_chunks_mut(w).enumerate().for_each(|(r, out)| {
            let up = r.saturating_sub(1);
            let down = (r + 1).min(h - 1);
            for (c, o) in out.iter_mut().enumerate() {
                let here = cur[r * w + c];
                let left = c.saturating_sub(1);
                let right = (c + 1).min(w - 1);
                let flux: f64 = [
                    cur[up * w + c],
                    cur[down * w + c],
                    cur[r * w + left],
                    cur[r * w + right],
                ]
                .iter()
                .map(|&n| {
                    let d = n - here;
                    conduction(d) * d
                })
                .sum();
                *o = here + lambda * flux;
            }
        });
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(to_gray(w, h, &cur))
}

/// Two-region split: label 0 below `t`, label 1 at or above.
pub fn baseline_fixed_threshold(img: &GrayImage, t: u8) -> LabelMap {
    let labels = img.pixels().iter().map(|&v| (v >= t) as u16).collect();
    LabelMap::new(img.width(), img.height(), 2, labels).expect("labels are 0 or 1")
}

/// A processing method that can be scored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Raw,
    Gaussian {
        sigma: f64,
    },
    Median {
        window: usize,
    },
    AnisotropicDiffusion(DiffusionParams),
    /// Fixed global threshold, scored on the binarized image (0 / 255).
    Threshold {
        t: u8,
    },
    /// Both HAS entries are scored on the merge-filtered image, which does not
    /// depend on the boundary rule, so their scores coincide.
    HasDistance {
        kernel: usize,
    },
    HasHistogram {
        kernel: usize,
    },
}

impl Method {
    /// The six-method comparison roster.
    pub fn roster(kernel: KernelSize) -> Vec<Method> {
        vec![
            Method::Raw,
            Method::Gaussian { sigma: 1.0 },
            Method::Median { window: 3 },
            Method::AnisotropicDiffusion(DiffusionParams::default()),
            Method::HasDistance {
                kernel: kernel.get(),
            },
            Method::HasHistogram {
                kernel: kernel.get(),
            },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Gaussian { .. } => "gaussian",
            Method::Median { .. } => "median",
            Method::AnisotropicDiffusion(_) => "anisotropic-diffusion",
            Method::Threshold { .. } => "threshold",
            Method::HasDistance { .. } => "has-distance",
            Method::HasHistogram { .. } => "has-histogram",
        }
    }

    pub fn params(&self) -> String {
        match self {
            Method::Raw => String::new(),
            Method::Gaussian { sigma } => format!("sigma={sigma}"),
            Method::Median { window } => format!("window={window}"),
            Method::AnisotropicDiffusion(p) => {
                format!(
                    "iterations={};kappa={};lambda={}",
                    p.iterations, p.kappa, p.lambda
                )
            }
            Method::Threshold { t } => format!("t={t}"),
            Method::HasDistance { kernel } | Method::HasHistogram { kernel } => {
                format!("kernel={kernel}")
            }
        }
    }

    /// The grayscale image this method is scored on.
    pub fn process(&self, img: &GrayImage) -> Result<GrayImage> {
        match *self {
            Method::Raw => Ok(img.clone()),
            Method::Gaussian { sigma } => baseline_gaussian(img, sigma),
            Method::Median { window } => baseline_median(img, window),
            Method::AnisotropicDiffusion(p) => baseline_anisotropic_diffusion(img, p),
            Method::Threshold { t } => Ok(img.map(|v| if v >= t { 255 } else { 0 })),
            Method::HasDistance { kernel } | Method::HasHistogram { kernel } => {
                filter_image(img, KernelSize::new(kernel)?)
            }
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationReport {
    pub method: String,
    pub score: f64,
    pub params: String,
}

/// Scores every method against `gt`, in the order given.
pub fn evaluate(
    img: &GrayImage,
    gt: &GroundTruth,
    methods: &[Method],
) -> Result<Vec<SeparationReport>> {
    if img.dimensions() != gt.dimensions() {
        return Err(Error::DimensionMismatch {
            image: img.dimensions(),
            truth: gt.dimensions(),
        });
    }
    methods
        .par_iter()
        .map(|m| {
            let processed = m.process(img)?;
            let (fg, bg) = split_distributions(&processed, gt)?;
            Ok(SeparationReport {
                method: m.name().to_string(),
                score: manhattan_separation(&fg, &bg),
                params: m.params(),
            })
        })
        .collect()
}

/// `method,score,params` table with a header row.
pub fn reports_to_csv(reports: &[SeparationReport]) -> String {
    let mut out = String::from("method,score,params\n");
    for r in reports {
        out.push_str(&format!("{},{:.6},{}\n", r.method, r.score, r.params));
    }
    out
}
