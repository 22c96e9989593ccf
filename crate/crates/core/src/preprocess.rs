//! Cloud/shadow masking from QA_PIXEL flags and per-pixel median compositing.

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;

use crate::error::{LulcError, Result};
use crate::raster::{Band, Raster};

/// Bits of a 16-bit QA word whose set state marks a pixel unusable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaBitSpec {
    bits: Vec<u8>,
}

impl QaBitSpec {
    /// Landsat Collection-2 QA_PIXEL: dilated cloud (1), cloud (3), cloud shadow (4).
    pub const DEFAULT_BITS: [u8; 3] = [1, 3, 4];

    pub fn new(bits: impl IntoIterator<Item = u8>) -> Result<Self> {
        let mut bits: Vec<u8> = bits.into_iter().collect();
        if bits.is_empty() {
            return Err(LulcError::Config("QA bit list must not be empty".into()));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 15) {
            return Err(LulcError::Config(format!("QA bit {b} outside 0..=15")));
        }
        bits.sort_unstable();
        bits.dedup();
        Ok(QaBitSpec { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bitmask(&self) -> u16 {
        self.bits.iter().fold(0u16, |m, &b| m | (1 << b))
    }

    pub fn flags(&self, qa: u16) -> bool {
        qa & self.bitmask() != 0
    }
}

impl Default for QaBitSpec {
    fn default() -> Self {
        QaBitSpec {
            bits: Self::DEFAULT_BITS.to_vec(),
        }
    }
}

/// Clears the mask wherever any bit of `spec` is set in the QA word. Band
/// values are untouched.
pub fn apply_qa_mask(raster: &Raster, qa_band: &Band, spec: &QaBitSpec) -> Result<Raster> {
    if qa_band.values.len() != raster.pixel_count() {
        return Err(LulcError::Shape(format!(
            "QA band '{}' has {} cells, raster has {}",
            qa_band.name,
            qa_band.values.len(),
            raster.pixel_count()
        )));
    }
    let bitmask = spec.bitmask();
    let mut mask = raster.mask().to_vec();
    for (i, (m, &q)) in mask.iter_mut().zip(&qa_band.values).enumerate() {
        if !*m {
            continue;
        }
        if !(0.0..=65535.0).contains(&q) || q.fract() != 0.0 {
            return Err(LulcError::Format(format!(
                "QA value {q} at pixel {i} is not a 16-bit word"
            )));
        }
        if (q as u16) & bitmask != 0 {
            *m = false;
        }
    }
    raster.with_mask(mask)
}

/// Co-registered observations of one scene footprint, ordered in time.
#[derive(Debug, Clone)]
pub struct TimeStack {
    epochs: Vec<(NaiveDate, Raster)>,
}

impl TimeStack {
    pub fn new(epochs: Vec<(NaiveDate, Raster)>) -> Result<Self> {
        let Some((_, first)) = epochs.first() else {
            return Err(LulcError::EmptyInput("time stack has no epochs".into()));
        };
        for pair in epochs.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(LulcError::Config(format!(
                    "epoch timestamps must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        let names = first.band_names();
        for (date, r) in &epochs[1..] {
            if !r.same_grid(first) || r.band_names() != names {
                return Err(LulcError::Shape(format!(
                    "epoch {date} does not match the grid or bands of the first epoch"
                )));
            }
        }
        Ok(TimeStack { epochs })
    }

    pub fn epochs(&self) -> &[(NaiveDate, Raster)] {
        &self.epochs
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Per-pixel, per-band median over the epochs where the pixel is valid.
///
/// Even counts take the lower of the two middle values so every output value
/// was actually observed. Pixels with no valid epoch stay masked.
pub fn median_composite(stack: &TimeStack) -> Result<Raster> {
    let epochs = &stack.epochs;
    let Some((_, first)) = epochs.first() else {
        return Err(LulcError::EmptyInput("time stack has no epochs".into()));
    };
    let n = first.pixel_count();
    let n_bands = first.band_count();

    let per_pixel: Vec<(bool, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let valid: Vec<&Raster> = epochs.iter().map(|(_, r)| r).filter(|r| r.mask()[i]).collect();
            if valid.is_empty() {
                return (false, vec![0.0; n_bands]);
            }
            let mid = (valid.len() - 1) / 2;
            let mut scratch = Vec::with_capacity(valid.len());
            let medians = (0..n_bands)
                .map(|b| {
                    scratch.clear();
                    scratch.extend(valid.iter().map(|r| r.bands()[b].values[i]));
                    *scratch.select_nth_unstable_by(mid, f64::total_cmp).1
                })
                .collect();
            (true, medians)
        })
        .collect();

    let mask = per_pixel.iter().map(|(ok, _)| *ok).collect();
    let bands = first
        .bands()
        .iter()
        .enumerate()
        .map(|(b, src)| Band {
            name: src.name.clone(),
            wavelength: src.wavelength,
            values: per_pixel.iter().map(|(_, v)| v[b]).collect(),
        })
        .collect();
    Raster::new(first.width(), first.height(), bands, mask, first.geo().clone())
}

/// One composite per labelled stack, in input order.
pub fn composite_series<K: Clone>(stacks: &[(K, TimeStack)]) -> Result<Vec<(K, Raster)>> {
    let out = stacks
        .iter()
        .map(|(key, stack)| Ok((key.clone(), median_composite(stack)?)))
        .collect::<Result<Vec<_>>>()?;
    if let Some((_, first)) = out.first() {
        if out.iter().any(|(_, r)| !r.same_grid(first)) {
            return Err(LulcError::Shape("composites do not share one grid".into()));
        }
    }
    Ok(out)
}

/// Groups dated scenes into consecutive windows of `months` calendar months,
/// aligned to January of year 0 (a 12-month window is a calendar year).
/// Returns each window's first day with its stack, in time order.
pub fn group_by_window(mut scenes: Vec<(NaiveDate, Raster)>, months: u32) -> Result<Vec<(NaiveDate, TimeStack)>> {
    if months == 0 {
        return Err(LulcError::Config("composite window must be at least one month".into()));
    }
    scenes.sort_by_key(|(d, _)| *d);
    let window_of = |d: &NaiveDate| (d.year() as i64 * 12 + d.month0() as i64).div_euclid(months as i64);
    let mut groups: Vec<(i64, Vec<(NaiveDate, Raster)>)> = Vec::new();
    for scene in scenes {
        let w = window_of(&scene.0);
        match groups.last_mut() {
            Some((key, members)) if *key == w => members.push(scene),
            _ => groups.push((w, vec![scene])),
        }
    }
    groups
        .into_iter()
        .map(|(w, members)| {
            let start_month = w * months as i64;
            let start = NaiveDate::from_ymd_opt(
                start_month.div_euclid(12) as i32,
                start_month.rem_euclid(12) as u32 + 1,
                1,
            )
            .ok_or_else(|| LulcError::Config("window start out of range".into()))?;
            Ok((start, TimeStack::new(members)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GeoRef;

    fn raster(values: Vec<f64>, mask: Vec<bool>) -> Raster {
        let n = values.len();
        Raster::new(n, 1, vec![Band::new("v", values)], mask, GeoRef::default()).unwrap()
    }

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(QaBitSpec::new([]).is_err());
        assert!(QaBitSpec::new([16]).is_err());
        assert_eq!(QaBitSpec::new([4, 3, 3]).unwrap().bits(), &[3, 4]);
        assert_eq!(QaBitSpec::default().bitmask(), 0b11010);
    }

    #[test]
    fn clear_qa_leaves_mask() {
        let r = raster(vec![1.0; 4], vec![true, false, true, true]);
        let out = apply_qa_mask(&r, &Band::new("qa", vec![0.0; 4]), &QaBitSpec::default()).unwrap();
        assert_eq!(out.mask(), r.mask());
    }

    #[test]
    fn single_bit_masks_single_pixel() {
        let r = raster(vec![1.0; 4], vec![true; 4]);
        let qa = Band::new("qa", vec![0.0, 8.0, 0.0, 4.0]);
        let out = apply_qa_mask(&r, &qa, &QaBitSpec::new([3]).unwrap()).unwrap();
        assert_eq!(out.mask(), &[true, false, true, true]);
        assert_eq!(out.bands(), r.bands());
    }

    #[test]
    fn qa_shape_mismatch() {
        let r = raster(vec![1.0; 4], vec![true; 4]);
        let err = apply_qa_mask(&r, &Band::new("qa", vec![0.0; 3]), &QaBitSpec::default());
        assert!(matches!(err, Err(LulcError::Shape(_))));
    }

    #[test]
    fn odd_and_even_medians() {
        let stack = TimeStack::new(vec![
            (day(2020, 1, 1), raster(vec![3.0, 4.0], vec![true, true])),
            (day(2020, 2, 1), raster(vec![1.0, 1.0], vec![true, true])),
            (day(2020, 3, 1), raster(vec![2.0, 9.0], vec![true, false])),
        ])
        .unwrap();
        let c = median_composite(&stack).unwrap();
        assert_eq!(c.bands()[0].values[0], 2.0);
        // even count [4, 1] → lower middle
        assert_eq!(c.bands()[0].values[1], 1.0);
    }

    #[test]
    fn single_epoch_is_identity() {
        let r = raster(vec![0.1, 0.2, 0.3], vec![true, false, true]);
        let c = median_composite(&TimeStack::new(vec![(day(2019, 5, 5), r.clone())]).unwrap()).unwrap();
        assert_eq!(c, r);
    }

    #[test]
    fn stack_validation() {
        assert!(matches!(TimeStack::new(vec![]), Err(LulcError::EmptyInput(_))));
        let r = raster(vec![0.0; 2], vec![true; 2]);
        assert!(TimeStack::new(vec![(day(2020, 2, 1), r.clone()), (day(2020, 1, 1), r.clone())]).is_err());
        let other = raster(vec![0.0; 3], vec![true; 3]);
        assert!(matches!(
            TimeStack::new(vec![(day(2020, 1, 1), r), (day(2020, 2, 1), other)]),
            Err(LulcError::Shape(_))
        ));
    }

    #[test]
    fn all_masked_stack_gives_masked_composite() {
        let r = raster(vec![5.0; 3], vec![false; 3]);
        let out = composite_series(&[(2020, TimeStack::new(vec![(day(2020, 1, 1), r)]).unwrap())]).unwrap();
        assert_eq!(out[0].1.valid_count(), 0);
        assert!(composite_series::<i32>(&[]).unwrap().is_empty());
    }

    #[test]
    fn windows_align_to_calendar() {
        let r = raster(vec![0.0], vec![true]);
        let scenes = vec![
            (day(2015, 11, 3), r.clone()),
            (day(2014, 2, 1), r.clone()),
            (day(2014, 12, 30), r.clone()),
            (day(2015, 1, 2), r.clone()),
        ];
        let yearly = group_by_window(scenes.clone(), 12).unwrap();
        let starts: Vec<_> = yearly.iter().map(|(d, s)| (*d, s.len())).collect();
        assert_eq!(starts, vec![(day(2014, 1, 1), 2), (day(2015, 1, 1), 2)]);
        let quarterly = group_by_window(scenes, 3).unwrap();
        assert_eq!(quarterly.len(), 4);
        assert_eq!(quarterly[2].0, day(2015, 1, 1));
        assert!(group_by_window(vec![], 0).is_err());
    }
}
