//! Chip dataset container, little-endian:
//!
//! ```text
//! "LKC1"
//! u32 chip_size, u32 channels, u32 chip_count
//! u8 split (0 train, 1 test, 2 unlabeled), u8 has_normalization
//! [channels f64 mean, channels f64 std]   if has_normalization
//! per chip: u32 col, u32 row, i32 label (-1 = none),
//!           chip_size*chip_size*channels f64 in (y, x, channel) order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Chip, ChipDataset, NormStats, SplitTag};
use crate::error::{LulcError, Result};

pub const MAGIC: &[u8; 4] = b"LKC1";

pub fn write_chips(dataset: &ChipDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LulcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(dataset, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| LulcError::io(path, e))
}

fn encode<W: Write>(ds: &ChipDataset, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [ds.chip_size, ds.channels, ds.chips.len()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&[ds.split.to_u8(), ds.normalization.is_some() as u8])?;
    if let Some(n) = &ds.normalization {
        for v in n.mean.iter().chain(&n.std) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for chip in &ds.chips {
        w.write_all(&(chip.center.0 as u32).to_le_bytes())?;
        w.write_all(&(chip.center.1 as u32).to_le_bytes())?;
        let label = chip.label.map(|l| l as i32).unwrap_or(-1);
        w.write_all(&label.to_le_bytes())?;
        for v in &chip.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_chips(path: impl AsRef<Path>) -> Result<ChipDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LulcError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| LulcError::io(path, e))?;
    if &magic != MAGIC {
        return Err(LulcError::Format(format!("{}: not a chip dataset", path.display())));
    }
    let io = |e| LulcError::io(path, e);
    let chip_size = read_u32(&mut r).map_err(io)? as usize;
    let channels = read_u32(&mut r).map_err(io)? as usize;
    let count = read_u32(&mut r).map_err(io)? as usize;
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags).map_err(io)?;
    let split =
        SplitTag::from_u8(flags[0]).ok_or_else(|| LulcError::Format(format!("unknown split tag {}", flags[0])))?;
    let normalization = match flags[1] {
        0 => None,
        1 => {
            let mean = read_f64s(&mut r, channels).map_err(io)?;
            let std = read_f64s(&mut r, channels).map_err(io)?;
            Some(NormStats { mean, std })
        }
        b => return Err(LulcError::Format(format!("bad normalization flag {b}"))),
    };
    let per_chip = chip_size * chip_size * channels;
    let mut chips = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let col = read_u32(&mut r).map_err(io)? as usize;
        let row = read_u32(&mut r).map_err(io)? as usize;
        let mut label = [0u8; 4];
        r.read_exact(&mut label).map_err(io)?;
        let label = i32::from_le_bytes(label);
        let data = read_f64s(&mut r, per_chip).map_err(io)?;
        chips.push(Chip {
            size: chip_size,
            channels,
            data,
            center: (col, row),
            label: usize::try_from(label).ok(),
        });
    }
    let mut ds = ChipDataset::new(chips, chip_size, channels, split)?;
    ds.normalization = normalization;
    Ok(ds)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut raw = vec![0u8; n * 8];
    r.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
