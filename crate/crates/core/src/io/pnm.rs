//! Portable pixmap/graymap output, a matching parser, and attention overlays.

use std::path::Path;

use super::write_file;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image::Image;

/// Blend weight of the heat ramp in overlays.
pub const OVERLAY_OPACITY: f64 = 0.5;

fn quantize(v: f64) -> u8 {
    (v * 255.0).round() as u8
}

/// Clamps to `[0, 1]`, warning once per call if anything moved.
fn clamped(values: &[f64]) -> Vec<f64> {
    let outside = values.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    if outside > 0 {
        log::warn!("clamping {} values outside [0, 1]", outside);
    }
    values
        .iter()
        .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
        .collect()
}

/// P6 for three channels, P5 for one; maxval 255.
pub fn encode_pnm(image: &Image) -> Result<Vec<u8>> {
    let (h, w, c) = image.dims();
    let magic = match c {
        3 => "P6",
        1 => "P5",
        _ => return Err(Error::contract(format!("cannot write a {}-channel pixmap", c))),
    };
    let mut out = format!("{}\n{} {}\n255\n", magic, w, h).into_bytes();
    out.extend(clamped(image.data()).into_iter().map(quantize));
    Ok(out)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while self.bytes.get(self.pos).is_some_and(|b| *b != b'\n') {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|v| *v > 0)
            .ok_or_else(|| Error::parse(start, format!("bad {}", what)))
    }
}

/// Parses binary P5/P6 (maxval up to 65535) into `[0, 1]` samples.
pub fn parse_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::parse(0, "not a binary P5/P6 file")),
    };
    let mut hd = Header { bytes, pos: 2 };
    let width = hd.number("width")?;
    let height = hd.number("height")?;
    let max_at = hd.pos;
    let maxval = hd.number("maxval")?;
    if maxval > 65535 {
        return Err(Error::parse(max_at, format!("maxval {} exceeds 65535", maxval)));
    }
    match bytes.get(hd.pos) {
        Some(b) if b.is_ascii_whitespace() => hd.pos += 1,
        _ => return Err(Error::parse(hd.pos, "missing separator before raster")),
    }
    let per = if maxval < 256 { 1 } else { 2 };
    let samples = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::parse(2, "image size overflows"))?;
    let raster = &bytes[hd.pos..];
    let need = samples.checked_mul(per).ok_or_else(|| Error::parse(2, "image size overflows"))?;
    if raster.len() != need {
        return Err(Error::parse(
            hd.pos + raster.len().min(need),
            format!("raster holds {} bytes, expected {}", raster.len(), need),
        ));
    }
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(samples);
    for (k, chunk) in raster.chunks_exact(per).enumerate() {
        let v = if per == 1 {
            chunk[0] as usize
        } else {
            (chunk[0] as usize) << 8 | chunk[1] as usize
        };
        if v > maxval {
            return Err(Error::parse(hd.pos + k * per, format!("sample {} exceeds maxval", v)));
        }
        data.push(v as f64 / scale);
    }
    Image::new(height, width, channels, data)
}

/// Heat ramp from blue through green to red for `t ∈ [0, 1]`.
pub fn heat(t: f64) -> [f64; 3] {
    let band = |c: f64| (1.5 - (4.0 * t - c).abs()).clamp(0.0, 1.0);
    [band(3.0), band(2.0), band(1.0)]
}

fn check_grid_fits(grid: &Grid, height: usize, width: usize, patch: usize) -> Result<()> {
    if grid.rows() * patch != height || grid.cols() * patch != width {
        return Err(Error::shape(format!(
            "{}x{} grid with patch {} does not cover {}x{}",
            grid.rows(),
            grid.cols(),
            patch,
            height,
            width
        )));
    }
    Ok(())
}

/// Blends the heat ramp of `grid / max` over `image`, each cell upsampled `P×P`.
pub fn overlay(image: &Image, grid: &Grid, patch: usize) -> Result<Image> {
    let (h, w, c) = image.dims();
    check_grid_fits(grid, h, w, patch)?;
    if c != 1 && c != 3 {
        return Err(Error::contract(format!("cannot overlay a {}-channel image", c)));
    }
    let max = grid.max();
    let base = Image::new(h, w, c, clamped(image.data()))?;
    let mut out = Image::zeros(h, w, 3);
    for y in 0..h {
        for x in 0..w {
            let g = grid.get(y / patch, x / patch);
            let t = if max > 0.0 { (g / max).clamp(0.0, 1.0) } else { 0.0 };
            let tint = heat(t);
            for (k, tk) in tint.iter().enumerate() {
                let src = base.get(y, x, if c == 3 { k } else { 0 });
                out.set(y, x, k, (1.0 - OVERLAY_OPACITY) * src + OVERLAY_OPACITY * tk);
            }
        }
    }
    Ok(out)
}

/// Grayscale image of `grid / max`, each cell upsampled `P×P`.
pub fn grid_image(grid: &Grid, patch: usize) -> Result<Image> {
    if patch == 0 {
        return Err(Error::contract("patch must be positive"));
    }
    let (h, w) = (grid.rows() * patch, grid.cols() * patch);
    let max = grid.max();
    let mut out = Image::zeros(h, w, 1);
    for y in 0..h {
        for x in 0..w {
            let g = grid.get(y / patch, x / patch);
            out.set(y, x, 0, if max > 0.0 { g / max } else { 0.0 });
        }
    }
    Ok(out)
}

pub fn render_image(image: &Image, path: &Path) -> Result<()> {
    write_file(path, &encode_pnm(image)?)
}

pub fn render_overlay(image: &Image, grid: &Grid, patch: usize, path: &Path) -> Result<()> {
    render_image(&overlay(image, grid, patch)?, path)
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    parse_pnm(&std::fs::read(path)?)
}
