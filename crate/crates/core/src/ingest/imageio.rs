//! PNG/PGM image loading into normalized [`Image`]s.

use std::path::Path;

use image::{ColorType, DynamicImage};

use super::{IngestError, Result};
use crate::imgmetrics::Image;

/// Reads an 8- or 16-bit PNG or PGM. Grayscale stays single-channel; anything
/// else becomes RGB with alpha dropped. Values are scaled to `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Image> {
    let img = image::ImageReader::open(path)
        .map_err(|e| IngestError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| IngestError::io(path, e))?
        .decode()
        .map_err(|e| IngestError::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageLumaA8(_) => (1, img_luma8(img)),
        DynamicImage::ImageLumaA16(_) => (1, img_luma16(img)),
        other if matches!(other.color(), ColorType::Rgb16 | ColorType::Rgba16) => {
            (3, other.into_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        other => (3, other.into_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
    };
    Image::new(w, h, channels, data).map_err(|e| IngestError::format(path, e.to_string()))
}

fn img_luma8(img: DynamicImage) -> Vec<f64> {
    img.into_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
}

fn img_luma16(img: DynamicImage) -> Vec<f64> {
    img.into_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
}
