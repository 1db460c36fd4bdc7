use std::io::Write;
use std::path::Path;

use super::PersistError;
use crate::synth::ImageTensor;

/// Grayscale file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary PGM (`P5`): header `P5 <width> <height> 255` with single
    /// spaces and one newline, then one byte per pixel, row-major.
    Pgm,
    Png,
}

impl ImageFormat {
    /// Format implied by a path's extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "pgm" => Some(ImageFormat::Pgm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

/// `round(intensity * 255)`, intensities clamped to `[0, 1]` first.
pub fn quantize(image: &ImageTensor) -> Vec<u8> {
    image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn encode_pgm(image: &ImageTensor) -> Vec<u8> {
    let mut out = format!("P5 {} {} 255\n", image.width(), image.height()).into_bytes();
    out.extend(quantize(image));
    out
}

pub fn encode_png(image: &ImageTensor) -> Result<Vec<u8>, PersistError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| PersistError::Image(e.to_string()))?;
        writer
            .write_image_data(&quantize(image))
            .map_err(|e| PersistError::Image(e.to_string()))?;
    }
    Ok(out)
}

pub fn export_image(image: &ImageTensor, path: &Path, format: ImageFormat) -> Result<(), PersistError> {
    let bytes = match format {
        ImageFormat::Pgm => encode_pgm(image),
        ImageFormat::Png => encode_png(image)?,
    };
    let mut f = std::fs::File::create(path).map_err(|e| PersistError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| PersistError::io(path, e))?;
    Ok(())
}

/// Parses a binary PGM with maxval 255 back into intensities `byte / 255`.
pub fn decode_pgm(bytes: &[u8]) -> Result<ImageTensor, PersistError> {
    let bad = |m: &str| PersistError::Image(format!("malformed PGM: {m}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("magic is not P5"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric field"));
    let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    let raster = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
    if raster.len() != width * height {
        return Err(bad("raster length mismatch"));
    }
    ImageTensor::new(height, width, raster.iter().map(|&b| b as f64 / 255.0).collect())
        .map_err(|e| PersistError::Image(e.to_string()))
}
