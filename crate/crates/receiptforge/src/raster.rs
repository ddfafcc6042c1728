//! 8-bit luminance rasters and binary ink masks.
//!
//! Images are immutable value types: every transformation returns a new
//! image. Binary PGM (P5) is the mandatory interchange format; binary PPM
//! (P6) is accepted at ingestion and converted to luminance.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geom::BBox;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("decode error: {0}")]
    DecodeError(String),
    #[error("rotation angle {0} outside the deskew regime (|angle| <= 45)")]
    InvalidAngle(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit luminance image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert_eq!(pixels.len(), width * height, "pixel count must equal width*height");
        GrayImage { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a fractional position; out-of-source positions
    /// return `fill`.
    pub fn sample_bilinear(&self, x: f64, y: f64, fill: u8) -> u8 {
        if x < 0.0 || y < 0.0 || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return fill;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        let top = p00 * (1.0 - fx) + p10 * fx;
        let bot = p01 * (1.0 - fx) + p11 * fx;
        (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8
    }

    pub fn crop(&self, b: &BBox) -> GrayImage {
        let b = b.clamped(self.width as i64, self.height as i64);
        let mut out = Vec::with_capacity((b.w * b.h) as usize);
        for y in b.y..b.bottom() {
            let row = y as usize * self.width;
            out.extend_from_slice(&self.pixels[row + b.x as usize..row + b.right() as usize]);
        }
        GrayImage::new(b.w as usize, b.h as usize, out)
    }

    /// Bilinear resize to exact target dimensions.
    pub fn resize(&self, new_w: usize, new_h: usize) -> GrayImage {
        assert!(new_w > 0 && new_h > 0);
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        let mut out = Vec::with_capacity(new_w * new_h);
        for y in 0..new_h {
            let src_y = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            for x in 0..new_w {
                let src_x = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                out.push(self.sample_bilinear(src_x, src_y, 255));
            }
        }
        GrayImage::new(new_w, new_h, out)
    }

    pub fn rotate180(&self) -> GrayImage {
        let mut px = self.pixels.clone();
        px.reverse();
        GrayImage::new(self.width, self.height, px)
    }

    /// Pad with `value` on the right/bottom so both dimensions are at least
    /// the requested minimums.
    pub fn pad_to(&self, min_w: usize, min_h: usize, value: u8) -> GrayImage {
        if self.width >= min_w && self.height >= min_h {
            return self.clone();
        }
        let w = self.width.max(min_w);
        let h = self.height.max(min_h);
        let mut out = vec![value; w * h];
        for y in 0..self.height {
            out[y * w..y * w + self.width]
                .copy_from_slice(&self.pixels[y * self.width..(y + 1) * self.width]);
        }
        GrayImage::new(w, h, out)
    }
}

/// One boolean per cell; `true` is ink (positive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height);
        BinaryMask { width, height, bits }
    }

    pub fn blank(width: usize, height: usize) -> Self {
        BinaryMask::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn rotate180(&self) -> BinaryMask {
        let mut bits = self.bits.clone();
        bits.reverse();
        BinaryMask::new(self.width, self.height, bits)
    }
}

/// Rec.601 luma from interleaved RGB triples, row-major.
pub fn to_luminance(width: usize, height: usize, rgb: &[u8]) -> Result<GrayImage, RasterError> {
    if rgb.len() != width * height * 3 {
        return Err(RasterError::DecodeError(format!(
            "expected {} RGB bytes, got {}",
            width * height * 3,
            rgb.len()
        )));
    }
    let pixels = rgb
        .chunks_exact(3)
        .map(|c| {
            let y = 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(GrayImage::new(width, height, pixels))
}

/// Rotate around the image center by `angle` degrees (counter-clockwise in
/// image coordinates), bilinear resampling, white fill outside the source.
/// Output is sized to contain the whole rotated frame.
pub fn rotate(img: &GrayImage, angle: f64) -> Result<GrayImage, RasterError> {
    if !angle.is_finite() || angle.abs() > 45.0 {
        return Err(RasterError::InvalidAngle(angle));
    }
    if angle == 0.0 {
        return Ok(img.clone());
    }
    let rad = angle.to_radians();
    let (sin, cos) = rad.sin_cos();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let out_w = (w * cos.abs() + h * sin.abs()).ceil() as usize;
    let out_h = (w * sin.abs() + h * cos.abs()).ceil() as usize;
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (ox, oy) = ((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let dx = x as f64 - ox;
            let dy = y as f64 - oy;
            // Inverse mapping: rotate the destination offset by -angle.
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            out.push(img.sample_bilinear(sx, sy, 255));
        }
    }
    Ok(GrayImage::new(out_w, out_h, out))
}

// ---------------------------------------------------------------------------
// PGM / PPM input-output
// ---------------------------------------------------------------------------

fn read_netpbm_header(data: &[u8], magic: &str) -> Result<(usize, usize, usize), RasterError> {
    let mut fields = Vec::new();
    let mut i = magic.len();
    if data.len() < i || &data[..i] != magic.as_bytes() {
        return Err(RasterError::DecodeError(format!("not a {magic} file")));
    }
    while fields.len() < 3 && i < data.len() {
        match data[i] {
            b'#' => {
                while i < data.len() && data[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < data.len() && !data[i].is_ascii_whitespace() {
                    i += 1;
                }
                let tok = std::str::from_utf8(&data[start..i])
                    .map_err(|e| RasterError::DecodeError(e.to_string()))?;
                fields.push(
                    tok.parse::<usize>()
                        .map_err(|_| RasterError::DecodeError(format!("bad header token {tok:?}")))?,
                );
            }
        }
    }
    if fields.len() != 3 {
        return Err(RasterError::DecodeError("truncated header".into()));
    }
    // One whitespace byte separates the header from pixel data.
    Ok((fields[0], fields[1], i + 1))
}

pub fn decode_pgm(data: &[u8]) -> Result<GrayImage, RasterError> {
    let (w, h, offset) = read_netpbm_header(data, "P5")?;
    let need = w * h;
    if data.len() < offset + need {
        return Err(RasterError::DecodeError("truncated pixel data".into()));
    }
    Ok(GrayImage::new(w, h, data[offset..offset + need].to_vec()))
}

pub fn decode_ppm(data: &[u8]) -> Result<GrayImage, RasterError> {
    let (w, h, offset) = read_netpbm_header(data, "P6")?;
    let need = w * h * 3;
    if data.len() < offset + need {
        return Err(RasterError::DecodeError("truncated pixel data".into()));
    }
    to_luminance(w, h, &data[offset..offset + need])
}

/// Decode PGM or PPM based on the magic number.
pub fn decode_image(data: &[u8]) -> Result<GrayImage, RasterError> {
    match data.get(..2) {
        Some(b"P5") => decode_pgm(data),
        Some(b"P6") => decode_ppm(data),
        _ => Err(RasterError::DecodeError("unsupported format (expected P5/P6)".into())),
    }
}

pub fn load_image(path: &Path) -> Result<GrayImage, RasterError> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    decode_image(&data)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<(), RasterError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_pgm(img))?;
    Ok(())
}
