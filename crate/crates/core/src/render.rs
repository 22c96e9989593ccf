//! Minimal PNG output: indexed maps, RGB canvases and simple line charts.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{LulcError, Result};

fn png_err(path: &Path, e: png::EncodingError) -> LulcError {
    match e {
        png::EncodingError::IoError(io) => LulcError::io(path, io),
        other => LulcError::Format(format!("{}: {other}", path.display())),
    }
}

/// Writes an 8-bit palette PNG. Every index must address `palette`.
pub fn write_indexed_png(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    palette: &[[u8; 3]],
    indices: &[u8],
) -> Result<()> {
    let path = path.as_ref();
    if palette.is_empty() || palette.len() > 256 {
        return Err(LulcError::Config(format!("palette of {} colors", palette.len())));
    }
    if indices.len() != width * height {
        return Err(LulcError::Shape(format!(
            "{} indices for {width}x{height}",
            indices.len()
        )));
    }
    if let Some(&i) = indices.iter().find(|&&i| i as usize >= palette.len()) {
        return Err(LulcError::Config(format!("index {i} has no palette entry")));
    }
    let file = File::create(path).map_err(|e| LulcError::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(palette.iter().flatten().copied().collect::<Vec<u8>>());
    let mut w = enc.write_header().map_err(|e| png_err(path, e))?;
    w.write_image_data(indices).map_err(|e| png_err(path, e))?;
    w.finish().map_err(|e| png_err(path, e))
}

pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, bg: [u8; 3]) -> Self {
        Canvas {
            width,
            height,
            rgb: bg.iter().copied().cycle().take(width * height * 3).collect(),
        }
    }

    pub fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = (y as usize * self.width + x as usize) * 3;
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, c: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.set(xx as i64, yy as i64, c);
            }
        }
    }

    /// Bresenham line.
    pub fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.set(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| LulcError::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| png_err(path, e))?;
        w.write_image_data(&self.rgb).map_err(|e| png_err(path, e))?;
        w.finish().map_err(|e| png_err(path, e))
    }
}

/// Plots each series as a polyline over a shared y range on a white canvas.
pub fn line_chart(series: &[(&[f64], [u8; 3])], width: usize, height: usize) -> Canvas {
    let mut c = Canvas::new(width, height, [255, 255, 255]);
    let pad = 20i64;
    let (w, h) = (width as i64 - 2 * pad, height as i64 - 2 * pad);
    let axis = [0, 0, 0];
    c.line((pad, pad), (pad, pad + h), axis);
    c.line((pad, pad + h), (pad + w, pad + h), axis);
    let finite = series.iter().flat_map(|(s, _)| s.iter()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return c;
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = series.iter().map(|(s, _)| s.len()).max().unwrap_or(0);
    let x_of = |i: usize| pad + if n > 1 { (i as i64 * w) / (n as i64 - 1) } else { 0 };
    let y_of = |v: f64| pad + h - ((v - lo) / span * h as f64).round() as i64;
    for (s, color) in series {
        for i in 1..s.len() {
            if s[i - 1].is_finite() && s[i].is_finite() {
                c.line((x_of(i - 1), y_of(s[i - 1])), (x_of(i), y_of(s[i])), *color);
            }
        }
    }
    c
}
