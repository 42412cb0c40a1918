//! Reading and writing grayscale rasters and rendered label maps.
//!
//! Reads PGM (`P2`/`P5`, any maxval up to 65535) and PNG (any color type, 8 or
//! 16 bit). Writes PGM `P5` or 8-bit grayscale PNG, chosen by file extension.
//! Label maps are written as 8-bit RGB PNG through [`LABEL_PALETTE`] plus a
//! `<stem>.regions.txt` sidecar with one `label lower upper peak` line per region.

use std::fs;
use std::io::{BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};

use crate::boundaries::RegionMap;
use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMap};

/// RGB color used for each label index when rendering a label map.
pub const LABEL_PALETTE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [128, 0, 0],
    [0, 0, 128],
    [128, 128, 128],
];

const PNG_SIGNATURE: &[u8] = &[0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Pgm,
    Png,
}

fn format_for_path(path: &Path) -> Result<Format> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => Ok(Format::Pgm),
        Some("png") => Ok(Format::Png),
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "output extension must be .pgm or .png".into(),
        }),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

/// Loads an 8-bit grayscale image from a PGM or PNG file.
///
/// Color PNGs are reduced with `round(0.299 R + 0.587 G + 0.114 B)`; samples
/// deeper than 8 bits are right-shifted down to 8 bits.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(&bytes, path)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(&bytes, path)
    } else if bytes.first() == Some(&b'P') && bytes.len() >= 2 && bytes[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("netpbm variant P{} is not grayscale PGM", bytes[1] as char),
        })
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "not a PGM or PNG file".into(),
        })
    }
}

/// Decodes PGM bytes. `path` is only used for error reporting.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let corrupt = |reason: String| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut cursor = HeaderCursor { bytes, pos: 2 };
    let binary = match &bytes[..2.min(bytes.len())] {
        b"P2" => false,
        b"P5" => true,
        _ => return Err(corrupt("missing P2/P5 magic".into())),
    };
    let width = cursor.number().map_err(&corrupt)?;
    let height = cursor.number().map_err(&corrupt)?;
    let maxval = cursor.number().map_err(&corrupt)?;
    if width == 0 || height == 0 {
        return Err(corrupt(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(corrupt(format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| corrupt("dimensions overflow".into()))?;
    let shift = bit_length(maxval).saturating_sub(8);

    let mut pixels = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates maxval from the raster
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => return Err(corrupt("missing whitespace after maxval".into())),
        }
        let data = &bytes[cursor.pos..];
        let sample_bytes = if maxval > 255 { 2 } else { 1 };
        if data.len() < n * sample_bytes {
            return Err(corrupt(format!(
                "raster truncated: need {} bytes, found {}",
                n * sample_bytes,
                data.len()
            )));
        }
        for i in 0..n {
            let v = if sample_bytes == 2 {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as usize
            } else {
                data[i] as usize
            };
            if v > maxval {
                return Err(corrupt(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push((v >> shift) as u8);
        }
    } else {
        for _ in 0..n {
            let v = cursor.number().map_err(&corrupt)?;
            if v > maxval {
                return Err(corrupt(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push((v >> shift) as u8);
        }
    }
    GrayImage::new(width, height, pixels)
}

fn bit_length(v: usize) -> usize {
    (usize::BITS - v.leading_zeros()) as usize
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> std::result::Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(self.pos) {
                None => "unexpected end of file".to_string(),
                Some(&b) => format!("expected a number at byte {start}, found {:?}", b as char),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("number at byte {start} is too large"))
    }
}

/// Integer luma, `round(0.299 R + 0.587 G + 0.114 B)`.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Decodes PNG bytes. `path` is only used for error reporting.
pub fn decode_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let corrupt = |e: png::DecodingError| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    // palette and low-bit-depth images expand to 8 bits; 16-bit samples keep
    // both bytes so the shift happens below
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptHeader {
            path: path.to_path_buf(),
            reason: "image too large".into(),
        })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(corrupt)?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let sample_bytes = match info.bit_depth {
        png::BitDepth::Sixteen => 2,
        _ => 1,
    };
    let stride = info.line_size;
    let sample = |row: &[u8], idx: usize| -> u8 {
        // high byte of a big-endian 16-bit sample is the value shifted right by 8
        row[idx * sample_bytes]
    };

    let mut pixels = Vec::with_capacity(width * height);
    for r in 0..height {
        let row = &buf[r * stride..r * stride + width * channels * sample_bytes];
        for c in 0..width {
            let base = c * channels;
            let v = match info.color_type {
                png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => sample(row, base),
                png::ColorType::Rgb | png::ColorType::Rgba => luma(
                    sample(row, base),
                    sample(row, base + 1),
                    sample(row, base + 2),
                ),
                png::ColorType::Indexed => {
                    return Err(Error::UnsupportedFormat {
                        path: path.to_path_buf(),
                        reason: "indexed PNG was not expanded".into(),
                    })
                }
            };
            pixels.push(v);
        }
    }
    GrayImage::new(width, height, pixels)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn png_err(path: &Path) -> impl Fn(png::EncodingError) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: match e {
            png::EncodingError::IoError(io) => io,
            other => std::io::Error::other(other.to_string()),
        },
    }
}

/// Encodes an image as binary PGM (`P5`, maxval 255).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(png_err(path))?;
    writer.write_image_data(data).map_err(png_err(path))?;
    writer.finish().map_err(png_err(path))
}

/// Writes `img` as PGM `P5` or grayscale PNG depending on the extension of `path`.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format_for_path(path)? {
        Format::Pgm => fs::write(path, encode_pgm(img)).map_err(io_err(path)),
        Format::Png => write_png(
            path,
            img.width(),
            img.height(),
            png::ColorType::Grayscale,
            img.pixels(),
        ),
    }
}

/// Path of the regions sidecar that accompanies a rendered label map.
pub fn regions_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("regions.txt")
}

/// Renders `labels` to an RGB PNG and writes the region table next to it.
pub fn save_label_map(
    labels: &LabelMap,
    regions: &RegionMap,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if labels.num_labels() > LABEL_PALETTE.len() {
        return Err(Error::TooManyRegions(labels.num_labels()));
    }
    let mut rgb = Vec::with_capacity(labels.labels().len() * 3);
    for &l in labels.labels() {
        rgb.extend_from_slice(&LABEL_PALETTE[l as usize]);
    }
    write_png(
        path,
        labels.width(),
        labels.height(),
        png::ColorType::Rgb,
        &rgb,
    )?;

    let sidecar = regions_sidecar_path(path);
    let mut out = BufWriter::new(fs::File::create(&sidecar).map_err(io_err(&sidecar))?);
    for (i, r) in regions.regions().iter().enumerate() {
        writeln!(out, "{} {} {} {}", i, r.lower, r.upper, r.peak).map_err(io_err(&sidecar))?;
    }
    out.flush().map_err(io_err(&sidecar))
}

/// Reads an RGB(A) PNG back into raw RGB triples. Used to inspect rendered label maps.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let corrupt = |e: png::DecodingError| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut decoder = png::Decoder::new(Cursor::new(&bytes[..]));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(corrupt)?;
    let channels = info.color_type.samples();
    if channels < 3 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "expected an RGB PNG".into(),
        });
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        let row = &buf[r * info.line_size..];
        for c in 0..w {
            let p = &row[c * channels..c * channels + 3];
            out.push([p[0], p[1], p[2]]);
        }
    }
    Ok((w, h, out))
}
