//! Minimal PGM (portable graymap) reader and writer.
//!
//! Both the binary (`P5`) and ASCII (`P2`) encodings are supported, with
//! 8-bit and 16-bit sample depths. Pixels are scaled to `[0, 1]` on read.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::DataError;

/// A decoded grayscale image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Bilinear resample to a new geometry.
    pub fn resize(&self, height: usize, width: usize) -> GrayImage {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            // map output pixel centers onto input pixel centers
            let src_r = if height > 1 {
                r as f64 * (self.height - 1) as f64 / (height - 1) as f64
            } else {
                0.0
            };
            let r0 = src_r.floor() as usize;
            let r1 = (r0 + 1).min(self.height - 1);
            let fr = src_r - r0 as f64;
            for c in 0..width {
                let src_c = if width > 1 {
                    c as f64 * (self.width - 1) as f64 / (width - 1) as f64
                } else {
                    0.0
                };
                let c0 = src_c.floor() as usize;
                let c1 = (c0 + 1).min(self.width - 1);
                let fc = src_c - c0 as f64;
                let top = self.get(r0, c0) * (1.0 - fc) + self.get(r0, c1) * fc;
                let bottom = self.get(r1, c0) * (1.0 - fc) + self.get(r1, c1) * fc;
                pixels.push(top * (1.0 - fr) + bottom * fr);
            }
        }
        GrayImage {
            height,
            width,
            pixels,
        }
    }
}

fn bad(path: &Path, message: impl Into<String>) -> DataError {
    DataError::Image {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    decode_pgm(&bytes).map_err(|message| bad(path, message))
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let magic = bytes.get(0..2).ok_or("truncated header")?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => return Err("not a PGM file (expected P2 or P5 magic)".to_string()),
    };
    let mut pos = 2;
    let width = read_header_int(bytes, &mut pos)?;
    let height = read_header_int(bytes, &mut pos)?;
    let maxval = read_header_int(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err("zero image dimension".to_string());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    let count = width * height;
    let scale = maxval as f64;
    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err("malformed raster separator".to_string());
        }
        pos += 1;
        let raster = &bytes[pos..];
        if maxval < 256 {
            if raster.len() < count {
                return Err("truncated raster".to_string());
            }
            raster[..count].iter().map(|&b| b as f64 / scale).collect()
        } else {
            if raster.len() < 2 * count {
                return Err("truncated raster".to_string());
            }
            raster[..2 * count]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
                .collect()
        }
    } else {
        let mut pixels = Vec::with_capacity(count);
        for _ in 0..count {
            let v = read_header_int(bytes, &mut pos)?;
            if v > maxval {
                return Err(format!("sample {v} exceeds maxval {maxval}"));
            }
            pixels.push(v as f64 / scale);
        }
        pixels
    };
    Ok(GrayImage {
        height,
        width,
        pixels,
    })
}

/// Read the next decimal integer, skipping whitespace and `#` comments.
fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize, String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err("expected integer in header".to_string());
    }
    std::str::from_utf8(&bytes[start..*pos])
        .unwrap()
        .parse()
        .map_err(|_| "integer out of range".to_string())
}

/// Write an 8-bit binary (`P5`) PGM; values are clamped to `[0, 1]`.
pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<(), DataError> {
    let mut out = Vec::with_capacity(32 + image.pixels.len());
    write!(out, "P5\n{} {}\n255\n", image.width, image.height).expect("in-memory write");
    for &v in &image.pixels {
        out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    fs::write(path, out).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
