//! Float images and their PNG / PFM encodings. Pixels are row-major, top
//! row first, channels interleaved.

use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{read_to_string, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * channels, "image buffer size");
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn pixel(&self, u: usize, v: usize) -> &[f64] {
        let o = (v * self.width + u) * self.channels;
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [f64] {
        let o = (v * self.width + u) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    /// Per-pixel channel mean.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks(self.channels)
            .map(|p| p.iter().sum::<f64>() / self.channels as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Decodes a PNG to `[0, 1]` by dividing by the maximum code value. Alpha
/// is dropped; gray stays one channel.
pub fn read_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let color = img.color();
    let gray = !color.has_color();
    let wide = color.bytes_per_pixel() / color.channel_count() >= 2;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match (gray, wide) {
        (true, false) => (1, img.to_luma8().into_raw().iter().map(|&x| x as f64 / 255.0).collect()),
        (false, false) => (3, img.to_rgb8().into_raw().iter().map(|&x| x as f64 / 255.0).collect()),
        (true, true) => (1, img.to_luma16().into_raw().iter().map(|&x| x as f64 / 65535.0).collect()),
        (false, true) => (3, img.to_rgb16().into_raw().iter().map(|&x| x as f64 / 65535.0).collect()),
    };
    Ok(Image::new(w, h, channels, data))
}

/// Encodes channels 1 or 3, clamping to `[0, 1]` and rounding to the nearest code.
pub fn write_png(path: &Path, img: &Image, depth: BitDepth) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let quant = |max: f64| {
        move |x: &f64| (x.clamp(0.0, 1.0) * max).round()
    };
    let dynamic = match (img.channels, depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, img.data.iter().map(quant(255.0)).map(|x| x as u8).collect())
                .expect("buffer size"),
        ),
        (3, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, img.data.iter().map(quant(255.0)).map(|x| x as u8).collect())
                .expect("buffer size"),
        ),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, img.data.iter().map(quant(65535.0)).map(|x| x as u16).collect())
                .expect("buffer size"),
        ),
        (3, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, img.data.iter().map(quant(65535.0)).map(|x| x as u16).collect())
                .expect("buffer size"),
        ),
        (c, _) => return Err(Error::format(path, format!("cannot encode {c} channels as PNG"))),
    };
    dynamic.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a PFM (`PF` color or `Pf` gray) of either byte order.
pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |msg: &str| Error::format(path, msg.to_string());
    // three whitespace-terminated header tokens
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PFM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match tokens[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("not a PFM file")),
    };
    let parse = |t: &str| t.parse::<usize>().map_err(|_| bad("bad PFM dimensions"));
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad PFM scale"))?;
    let n = w * h * channels;
    let body = bytes.get(pos..pos + 4 * n).ok_or_else(|| bad("truncated PFM data"))?;
    let mut data = vec![0.0; n];
    let row = w * channels;
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if scale < 0.0 {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // rows are stored bottom to top
        let (r, c) = (k / row, k % row);
        data[(h - 1 - r) * row + c] = x as f64;
    }
    Ok(Image::new(w, h, channels, data))
}

/// Writes a little-endian PFM.
pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::format(path, format!("cannot encode {c} channels as PFM"))),
    };
    let mut out = Vec::with_capacity(32 + 4 * img.data.len());
    write!(out, "{tag}\n{} {}\n-1.0\n", img.width, img.height).expect("in-memory write");
    let row = img.width * img.channels;
    for r in (0..img.height).rev() {
        for x in &img.data[r * row..(r + 1) * row] {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    crate::error::write(path, out)
}

/// Reads by extension: `.pfm` or PNG.
pub fn read_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pfm") => read_pfm(path),
        Some("png") => read_png(path),
        _ => Err(Error::format(path, "unsupported image type (expected .png or .pfm)")),
    }
}

/// Whitespace-separated numeric rows; blank lines and `#` comments skipped.
pub fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_to_string(path)?;
    let mut rows = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", no + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}
