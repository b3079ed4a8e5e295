//! Binary netpbm frame files: P5 (grayscale) and P6 (color), maxval 255.
//!
//! The format is deliberately minimal — a fixed maxval and raw bytes — so a
//! write/read round trip is bit-exact and the parser stays tiny. Comments
//! (`#` to end of line) are accepted in headers but never written.

use std::path::Path;

use crate::{Error, Result};

/// An 8-bit image, row-major, channels interleaved. `channels` is 1 or 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Image> {
        if height == 0 || width == 0 {
            return Err(Error::Data(format!(
                "image dimensions must be positive, got {}x{}",
                height, width
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Data(format!(
                "image channels must be 1 or 3, got {}",
                channels
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Data(format!(
                "image {}x{}x{} wants {} bytes, got {}",
                height,
                width,
                channels,
                height * width * channels,
                pixels.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn at(&self, y: usize, x: usize, ch: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + ch]
    }
}

/// Serialize to P5 (1 channel) or P6 (3 channels) bytes.
pub fn encode(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{}\n{} {}\n255\n", magic, img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Parse P5/P6 bytes. Rejects anything but maxval 255 and trailing bytes.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    let bad = |msg: &str| Error::Data(format!("netpbm: {}", msg));
    if bytes.len() < 2 {
        return Err(bad("file too short"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(bad("bad magic (expected P5 or P6)")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Skip whitespace and comments between header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_digit() => break,
                _ => return Err(bad("truncated header")),
            }
        }
        let mut value = 0usize;
        while let Some(b) = bytes.get(pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as usize))
                .ok_or_else(|| bad("header value overflow"))?;
            pos += 1;
        }
        *field = value;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad(&format!("unsupported maxval {} (expected 255)", maxval)));
    }
    // Exactly one whitespace byte separates the header from raster data.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing raster separator")),
    }
    let want = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| bad("image size overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() < want {
        return Err(bad(&format!(
            "truncated raster: want {} bytes, have {}",
            want,
            raster.len()
        )));
    }
    if raster.len() > want {
        return Err(bad("trailing bytes after raster"));
    }
    Image::new(height, width, channels, raster.to_vec())
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    std::fs::write(path, encode(img)).map_err(|e| Error::io_at(path, e))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {}", path.display(), msg)),
        other => other,
    })
}

/// Header-only read: (height, width, channels) without touching the raster.
pub fn read_image_meta(path: &Path) -> Result<(usize, usize, usize)> {
    // Frames are small; decode whole files rather than keeping a second
    // streaming header parser in sync with decode().
    let img = read_image(path)?;
    Ok((img.height, img.width, img.channels))
}
