//! Depth maps: 16-bit PGM in millimeters, or raw little-endian `f32` grids
//! described by a JSON sidecar (`<file>.json` holding width, height and unit).

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use super::{IngestError, Result};
use crate::calibrate::DepthMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DepthUnit {
    #[serde(rename = "m")]
    #[default]
    Meters,
    #[serde(rename = "mm")]
    Millimeters,
}

impl DepthUnit {
    pub fn to_meters(self) -> f64 {
        match self {
            DepthUnit::Meters => 1.0,
            DepthUnit::Millimeters => 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub unit: DepthUnit,
}

/// Location of the sidecar for a raw grid: the file name with `.json` appended.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn depth_map(path: &Path, width: usize, height: usize, values: Vec<f64>) -> Result<DepthMap> {
    DepthMap::from_values(width, height, values).map_err(|e| IngestError::format(path, e.to_string()))
}

/// Reads a depth map in meters. Zero and non-finite entries are masked invalid.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    if is_pgm(path) {
        read_depth_pgm(path)
    } else {
        read_depth_raw(path)
    }
}

fn read_depth_pgm(path: &Path) -> Result<DepthMap> {
    let img = image::ImageReader::open(path)
        .map_err(|e| IngestError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| IngestError::io(path, e))?
        .decode()
        .map_err(|e| IngestError::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f64> = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f64 * 1e-3).collect(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 * 1e-3).collect(),
        other => {
            return Err(IngestError::format(path, format!("expected a grayscale PGM, got {:?}", other.color())));
        }
    };
    depth_map(path, w, h, values)
}

fn read_depth_raw(path: &Path) -> Result<DepthMap> {
    let side_path = sidecar_path(path);
    let text = super::read_text(&side_path)?;
    let side: DepthSidecar = serde_json::from_str(&text)
        .map_err(|e| IngestError::parse(&side_path, e.line(), e.to_string()))?;
    let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
    let expected = side.width * side.height * 4;
    if bytes.len() != expected {
        return Err(IngestError::format(
            path,
            format!(
                "sidecar declares {}x{} ({expected} bytes) but file has {} bytes",
                side.width,
                side.height,
                bytes.len()
            ),
        ));
    }
    let scale = side.unit.to_meters();
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64 * scale)
        .collect();
    depth_map(path, side.width, side.height, values)
}

/// Writes a raw `f32` grid in meters plus its sidecar. Masked entries are written as 0.
pub fn write_depth(depth: &DepthMap, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(depth.values().len() * 4);
    for (v, ok) in depth.values().iter().zip(depth.valid_mask()) {
        let v = if *ok { *v as f32 } else { 0.0 };
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| IngestError::io(path, e))?;
    let side = DepthSidecar { width: depth.width(), height: depth.height(), unit: DepthUnit::Meters };
    let text = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    super::write_text(&sidecar_path(path), &(text + "\n"))
}

/// Writes a 16-bit PGM in millimeters, rounding to the nearest millimeter.
pub fn write_depth_pgm(depth: &DepthMap, path: &Path) -> Result<()> {
    let mut raw = Vec::with_capacity(depth.values().len());
    for (v, ok) in depth.values().iter().zip(depth.valid_mask()) {
        let mm = if *ok { (v * 1e3).round() } else { 0.0 };
        if !(0.0..=u16::MAX as f64).contains(&mm) {
            return Err(IngestError::InvalidInput(format!("depth {v} m does not fit a 16-bit PGM")));
        }
        raw.push(mm as u16);
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw).expect("buffer size matches");
    buf.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| IngestError::format(path, e.to_string()))
}
