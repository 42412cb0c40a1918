//! Synthetic IC-layer phantoms with known per-pixel material labels.
//!
//! Geometry is drawn from a PCG64 stream seeded with the spec seed. Pixel
//! noise is drawn row by row: row `r` uses its own PCG64 stream seeded with
//! `seed + (r + 1) * 0x9E3779B97F4A7C15` (wrapping), so rows can be generated
//! independently and in parallel while the output stays bit-identical.
//!
//! Phantom specs are stored as `key = value` text:
//!
//! ```text
//! # polysilicon-like layer
//! width = 512
//! height = 512
//! layout = rectangles-with-vias
//! via_size = 6
//! cell_size = 96
//! grid = 6
//! seed = 1
//! material = 130 12    # mean sigma, one line per material; the first is the substrate
//! material = 60 12
//! material = 210 12
//! ```

use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMap};

const ROW_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Mean intensity and Gaussian noise level of one material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub mean: u8,
    pub sigma: f64,
}

/// Spatial arrangement of the materials.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Vertical stripes cycling through every material (doped-region motif).
    Stripes,
    /// Structure rectangles on the substrate with square vias inside them
    /// (polysilicon motif). Material 0 is the substrate, material 2 the vias,
    /// all others fill rectangles.
    RectanglesWithVias,
    /// Horizontal interconnect tracks with occasional cuts (metal motif).
    /// Material 0 is the substrate, the others fill tracks.
    MetalTracks,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stripes" => Ok(Self::Stripes),
            "rectangles-with-vias" => Ok(Self::RectanglesWithVias),
            "metal-tracks" => Ok(Self::MetalTracks),
            other => Err(Error::InvalidSpec(format!("unknown layout `{other}`"))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stripes => "stripes",
            Self::RectanglesWithVias => "rectangles-with-vias",
            Self::MetalTracks => "metal-tracks",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub materials: Vec<Material>,
    pub layout: Layout,
    pub via_size: usize,
    /// Side of the square layout cell that holds one structure rectangle.
    pub cell_size: usize,
    /// Rectangle and via edges are snapped to multiples of this many pixels.
    pub grid: usize,
    pub seed: u64,
}

pub const DEFAULT_VIA_SIZE: usize = 6;
pub const DEFAULT_CELL_SIZE: usize = 96;
pub const DEFAULT_GRID: usize = 1;
const TRACK_PITCH: usize = 16;

impl PhantomSpec {
    /// The three-material polysilicon-like phantom used throughout the tests.
    pub fn three_material(size: usize, sigma: f64, seed: u64) -> Self {
        Self {
            width: size,
            height: size,
            // substrate, structures, vias
            materials: [130, 60, 210]
                .into_iter()
                .map(|mean| Material { mean, sigma })
                .collect(),
            layout: Layout::RectanglesWithVias,
            via_size: DEFAULT_VIA_SIZE,
            cell_size: DEFAULT_CELL_SIZE,
            grid: 6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        let m = self.materials.len();
        if !(1..=16).contains(&m) {
            return bad(format!("need 1 to 16 materials, got {m}"));
        }
        for (i, a) in self.materials.iter().enumerate() {
            if !(a.sigma.is_finite() && a.sigma >= 0.0) {
                return bad(format!("material {i} has invalid sigma {}", a.sigma));
            }
            if self.materials[..i].iter().any(|b| b.mean == a.mean) {
                return bad(format!("material mean {} appears twice", a.mean));
            }
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            ));
        }
        if self.via_size < 2 {
            return bad(format!(
                "via_size must be at least 2, got {}",
                self.via_size
            ));
        }
        match self.layout {
            Layout::Stripes if self.width < 2 * m => bad(format!(
                "stripes with {m} materials need width >= {}",
                2 * m
            )),
            Layout::RectanglesWithVias => {
                let cells_needed = m.saturating_sub(2).max(1);
                let cell = self.cell_size;
                if self.grid == 0 || !self.via_size.is_multiple_of(self.grid) {
                    return bad(format!(
                        "via_size {} is not a multiple of grid {}",
                        self.via_size, self.grid
                    ));
                }
                if cell < 6 * self.via_size + 4 * self.grid {
                    return bad(format!(
                        "cell_size {cell} must be at least 6 * via_size + 4 * grid"
                    ));
                }
                let cells = (self.width / cell) * (self.height / cell);
                if cells < 2 * cells_needed {
                    bad(format!(
                        "{}x{} fits {cells} cells of {cell} px, {} needed",
                        self.width,
                        self.height,
                        2 * cells_needed
                    ))
                } else {
                    Ok(())
                }
            }
            Layout::MetalTracks
                if self.height < TRACK_PITCH * m.saturating_sub(1).max(1) || self.width < 8 =>
            {
                bad(format!(
                    "metal tracks with {m} materials need height >= {} and width >= 8",
                    TRACK_PITCH * m.saturating_sub(1).max(1)
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut width = None;
        let mut height = None;
        let mut layout = None;
        let mut via_size = DEFAULT_VIA_SIZE;
        let mut cell_size = DEFAULT_CELL_SIZE;
        let mut grid = DEFAULT_GRID;
        let mut seed = 0u64;
        let mut materials = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err =
                |msg: &str| Error::InvalidSpec(format!("line {}: {msg}: `{raw}`", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`"))?;
            let value = value.trim();
            let int = |v: &str| v.parse::<u64>().map_err(|_| err("expected an integer"));
            match key.trim() {
                "width" => width = Some(int(value)? as usize),
                "height" => height = Some(int(value)? as usize),
                "layout" => layout = Some(value.parse::<Layout>()?),
                "via_size" => via_size = int(value)? as usize,
                "cell_size" => cell_size = int(value)? as usize,
                "grid" => grid = int(value)? as usize,
                "seed" => seed = int(value)?,
                "material" => {
                    let mut parts = value.split_whitespace();
                    let mean = parts
                        .next()
                        .and_then(|v| v.parse::<u8>().ok())
                        .ok_or_else(|| err("material mean must be an integer in 0..=255"))?;
                    let sigma = parts
                        .next()
                        .map(|v| {
                            v.parse::<f64>()
                                .map_err(|_| err("material sigma must be a number"))
                        })
                        .transpose()?
                        .unwrap_or(0.0);
                    if parts.next().is_some() {
                        return Err(err("material takes `mean [sigma]`"));
                    }
                    materials.push(Material { mean, sigma });
                }
                _ => return Err(err("unknown key")),
            }
        }
        let spec = Self {
            width: width.ok_or_else(|| Error::InvalidSpec("missing `width`".into()))?,
            height: height.ok_or_else(|| Error::InvalidSpec("missing `height`".into()))?,
            materials,
            layout: layout.unwrap_or(Layout::RectanglesWithVias),
            via_size,
            cell_size,
            grid,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for PhantomSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "width = {}", self.width)?;
        writeln!(f, "height = {}", self.height)?;
        writeln!(f, "layout = {}", self.layout)?;
        writeln!(f, "via_size = {}", self.via_size)?;
        writeln!(f, "cell_size = {}", self.cell_size)?;
        writeln!(f, "grid = {}", self.grid)?;
        writeln!(f, "seed = {}", self.seed)?;
        for m in &self.materials {
            writeln!(f, "material = {} {}", m.mean, m.sigma)?;
        }
        Ok(())
    }
}

impl FromStr for PhantomSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

fn fill_rect(
    labels: &mut [u16],
    width: usize,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    label: u16,
) {
    for r in rows {
        labels[r * width + cols.start..r * width + cols.end].fill(label);
    }
}

/// Material index of every pixel.
fn layout_labels(spec: &PhantomSpec) -> Vec<u16> {
    let (w, h) = (spec.width, spec.height);
    let m = spec.materials.len();
    let mut labels = vec![0u16; w * h];
    let mut rng = Pcg64::seed_from_u64(spec.seed);
    match spec.layout {
        _ if m == 1 => {}
        Layout::Stripes => {
            // every material gets at least two stripes
            let stripe = (w / (2 * m)).max(1);
            for r in 0..h {
                for c in 0..w {
                    labels[r * w + c] = ((c / stripe) % m) as u16;
                }
            }
        }
        Layout::RectanglesWithVias => {
            let cell = spec.cell_size;
            let via = spec.via_size;
            let g = spec.grid;
            let pitch = 4 * via;
            // rectangle materials: 1, then 3.. when present
            let fills: Vec<u16> = std::iter::once(1).chain((3..m).map(|i| i as u16)).collect();
            let (ncx, ncy) = (w / cell, h / cell);
            // cells are stretched so that together they span the whole image
            let span = |i: usize, n: usize, len: usize| {
                ((i * len / n).div_ceil(g) * g, (i + 1) * len / n / g * g)
            };
            let mut n = 0usize;
            for cy in 0..ncy {
                for cx in 0..ncx {
                    let (x_lo, x_hi) = span(cx, ncx, w);
                    let (y_lo, y_hi) = span(cy, ncy, h);
                    let rect = |rng: &mut Pcg64, lo: usize, hi: usize| {
                        let span = hi - lo;
                        let len = rng.random_range(span / 2..=3 * span / 4) / g * g;
                        let start = lo + rng.random_range(0..=span - len) / g * g;
                        (start, len)
                    };
                    let (x0, rw) = rect(&mut rng, x_lo, x_hi);
                    let (y0, rh) = rect(&mut rng, y_lo, y_hi);
                    fill_rect(
                        &mut labels,
                        w,
                        y0..y0 + rh,
                        x0..x0 + rw,
                        fills[n % fills.len()],
                    );
                    if m >= 3 {
                        // contact lattice, centred, at least one grid step inside the rectangle
                        let lattice = |len: usize| {
                            let count = (len - via - 2 * g) / pitch + 1;
                            let margin = (len - (count - 1) * pitch - via) / 2 / g * g;
                            (count, margin)
                        };
                        let (nx, mx) = lattice(rw);
                        let (ny, my) = lattice(rh);
                        for iy in 0..ny {
                            for ix in 0..nx {
                                let vx = x0 + mx + ix * pitch;
                                let vy = y0 + my + iy * pitch;
                                fill_rect(&mut labels, w, vy..vy + via, vx..vx + via, 2);
                            }
                        }
                    }
                    n += 1;
                }
            }
        }
        Layout::MetalTracks => {
            for band in 0..h / TRACK_PITCH {
                let tw = rng.random_range(TRACK_PITCH / 3..=2 * TRACK_PITCH / 3);
                let y0 = band * TRACK_PITCH + rng.random_range(0..=TRACK_PITCH - tw);
                let label = (1 + band % (m - 1)) as u16;
                fill_rect(&mut labels, w, y0..y0 + tw, 0..w, label);
                // one cut per track segment of roughly 128 px
                let mut x = rng.random_range(0..w.min(128));
                while x < w {
                    let gap = rng.random_range(2..=6).min(w - x);
                    fill_rect(&mut labels, w, y0..y0 + tw, x..x + gap, 0);
                    x += gap + rng.random_range(64..=192);
                }
            }
        }
    }
    labels
}

/// Generates a phantom image and its per-pixel material labels.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(GrayImage, LabelMap)> {
    spec.validate()?;
    let labels = layout_labels(spec);
    let mut counts = vec![0usize; spec.materials.len()];
    for &l in &labels {
        counts[l as usize] += 1;
    }
    // every material must cover at least 1% of the image
    if let Some(i) = counts.iter().position(|&n| n * 100 < labels.len()) {
        return Err(Error::InvalidSpec(format!(
            "material {i} would cover only {} of {} pixels (< 1%); enlarge the image or the cells",
            counts[i],
            labels.len()
        )));
    }
    let w = spec.width;
    let mut pixels = vec![0u8; w * spec.height];
    pixels
        .par_chunks_mut(w)
        .zip(labels.par_chunks(w))
        .enumerate()
        .for_each(|(r, (out, lab))| {
            let seed = spec
                .seed
                .wrapping_add((r as u64 + 1).wrapping_mul(ROW_SEED_STRIDE));
            let mut rng = Pcg64::seed_from_u64(seed);
            for (px, &l) in out.iter_mut().zip(lab) {
                let mat = spec.materials[l as usize];
                let z: f64 = rng.sample(StandardNormal);
                *px = (mat.mean as f64 + mat.sigma * z).round().clamp(0.0, 255.0) as u8;
            }
        });
    let img = GrayImage::new(w, spec.height, pixels)?;
    let truth = LabelMap::new(w, spec.height, spec.materials.len(), labels)?;
    Ok((img, truth))
}

/// Adds a left-to-right ramp rising from 0 to `max_delta`, saturating at 255.
pub fn add_intensity_gradient(img: &GrayImage, max_delta: u8) -> GrayImage {
    let w = img.width();
    let span = (w - 1).max(1) as u32;
    let ramp: Vec<u32> = (0..w as u32)
        .map(|c| (2 * max_delta as u32 * c + span) / (2 * span))
        .collect();
    GrayImage::from_fn(w, img.height(), |r, c| {
        (img.get(r, c) as u32 + ramp[c]).min(255) as u8
    })
    .expect("same dimensions as a valid image")
}
