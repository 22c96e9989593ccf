//! Dependency-free little-endian raster container.
//!
//! Layout:
//!
//! ```text
//! "LKR1"
//! u32 width, u32 height, u32 band_count
//! u16 crs_len, crs bytes (UTF-8)
//! f64 origin_x, origin_y, pixel_size_x, pixel_size_y
//! per band: u16 name_len, name bytes, width*height f64 (row-major)
//! width*height u8 mask (1 = valid, 0 = nodata)
//! ```
//!
//! Band wavelength metadata is not part of the format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Band, GeoRef, Raster};
use crate::error::{LulcError, Result};

pub const MAGIC: &[u8; 4] = b"LKR1";

pub fn write_portable(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LulcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(raster, &mut w).map_err(|e| LulcError::io(path, e))?;
    w.flush().map_err(|e| LulcError::io(path, e))
}

pub fn read_portable(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LulcError::io(path, e))?;
    decode(&mut BufReader::new(file)).map_err(|e| match e {
        DecodeError::Io(e) => LulcError::io(path, e),
        DecodeError::Lulc(e) => e,
    })
}

pub fn encode<W: Write>(raster: &Raster, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(raster.width() as u32).to_le_bytes())?;
    w.write_all(&(raster.height() as u32).to_le_bytes())?;
    w.write_all(&(raster.band_count() as u32).to_le_bytes())?;
    write_str(w, &raster.geo().crs)?;
    let geo = raster.geo();
    for v in [geo.origin.0, geo.origin.1, geo.pixel_size.0, geo.pixel_size.1] {
        w.write_all(&v.to_le_bytes())?;
    }
    for band in raster.bands() {
        write_str(w, &band.name)?;
        for v in &band.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    let mask: Vec<u8> = raster.mask().iter().map(|&m| m as u8).collect();
    w.write_all(&mask)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "string longer than 65535 bytes"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub(crate) enum DecodeError {
    Io(std::io::Error),
    Lulc(LulcError),
}

impl From<std::io::Error> for DecodeError {
    fn from(e: std::io::Error) -> Self {
        DecodeError::Io(e)
    }
}

impl From<LulcError> for DecodeError {
    fn from(e: LulcError) -> Self {
        DecodeError::Lulc(e)
    }
}

pub(crate) fn decode<R: Read>(r: &mut R) -> std::result::Result<Raster, DecodeError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LulcError::Format(format!("bad magic {magic:?}, expected LKR1")).into());
    }
    let width = read_u32(r)? as usize;
    let height = read_u32(r)? as usize;
    let band_count = read_u32(r)? as usize;
    let n = width
        .checked_mul(height)
        .filter(|&n| n > 0 && n <= 1 << 32)
        .ok_or_else(|| LulcError::Format(format!("implausible dimensions {width}x{height}")))?;
    let crs = read_str(r)?;
    let mut geo = [0.0f64; 4];
    for g in geo.iter_mut() {
        *g = read_f64(r)?;
    }
    let mut bands = Vec::with_capacity(band_count.min(1024));
    for _ in 0..band_count {
        let name = read_str(r)?;
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        bands.push(Band::new(name, values));
    }
    let mut raw_mask = vec![0u8; n];
    r.read_exact(&mut raw_mask)?;
    let mask = raw_mask
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(LulcError::Format(format!("mask byte {other} is neither 0 nor 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let geo = GeoRef::new(crs, (geo[0], geo[1]), (geo[2], geo[3]))?;
    Ok(Raster::new(width, height, bands, mask, geo)?)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> std::result::Result<String, DecodeError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    let mut buf = vec![0u8; u16::from_le_bytes(b) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| LulcError::Format("string is not UTF-8".into()).into())
}
