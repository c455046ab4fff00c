//! Input images: plain-text grids and IDX dataset files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use attverify_core::ImageMeta;

use crate::error::{CliError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

/// Where an image comes from: `path` for a text grid, `idx:path:index` for
/// one image of an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    Grid(PathBuf),
    Idx { path: PathBuf, index: usize },
}

impl FromStr for ImageSource {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("idx:") else {
            return Ok(ImageSource::Grid(PathBuf::from(s)));
        };
        let (path, index) = rest
            .rsplit_once(':')
            .ok_or_else(|| CliError::Config(format!("expected idx:<path>:<index>, got `{s}`")))?;
        let index = index
            .parse()
            .map_err(|_| CliError::Config(format!("bad image index `{index}`")))?;
        Ok(ImageSource::Idx {
            path: PathBuf::from(path),
            index,
        })
    }
}

impl fmt::Display for ImageSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageSource::Grid(p) => write!(f, "{}", p.display()),
            ImageSource::Idx { path, index } => write!(f, "idx:{}:{}", path.display(), index),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    /// Row-major pixels in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub meta: ImageMeta,
}

pub fn load_image(source: &ImageSource) -> Result<Image> {
    match source {
        ImageSource::Grid(path) => parse_grid(&fs::read_to_string(path).map_err(|e| CliError::io(path, e))?),
        ImageSource::Idx { path, index } => parse_idx(&read_bytes(path)?, *index),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Comma-separated rows of reals, one image row per line. Blank lines are
/// ignored.
pub fn parse_grid(text: &str) -> Result<Image> {
    let mut pixels = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Image(format!("line {}: bad number `{}`", n + 1, v.trim())))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CliError::Image(format!(
                    "line {}: {} values, expected {w}",
                    n + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CliError::Image(format!("line {}: pixel {v} outside [0, 1]", n + 1)));
        }
        pixels.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| CliError::Image("empty image".into()))?;
    Ok(Image {
        pixels,
        meta: ImageMeta::new(width, height),
    })
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| CliError::Image("truncated IDX header".into()))
}

/// Image `index` of an IDX image file: big-endian magic `0x00000803`, image
/// count, rows, columns, then one unsigned byte per pixel.
pub fn parse_idx(bytes: &[u8], index: usize) -> Result<Image> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(CliError::Image(format!(
            "bad IDX magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if index >= count {
        return Err(CliError::Image(format!("index {index} out of range ({count} images)")));
    }
    let size = rows * cols;
    let start = 16 + index * size;
    let data = bytes
        .get(start..start + size)
        .ok_or_else(|| CliError::Image("truncated IDX data".into()))?;
    Ok(Image {
        pixels: data.iter().map(|&b| f64::from(b) / 255.0).collect(),
        meta: ImageMeta::new(cols, rows),
    })
}
