//! Chip datasets: fixed-size windows around labelled pixels, stratified
//! train/test splits, minority up-sampling, and channel normalization.

pub mod io;
pub mod labels;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{LulcError, Result};
use crate::raster::Raster;
use crate::seed;

pub use io::{read_chips, write_chips};
pub use labels::{read_labels, read_labels_csv, read_labels_geojson, write_labels_csv};

pub const DEFAULT_CHIP_SIZE: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandClass {
    pub id: usize,
    pub name: String,
    pub color: [u8; 3],
}

/// Ordered land cover classes; ids are contiguous from 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassScheme {
    classes: Vec<LandClass>,
}

impl ClassScheme {
    pub fn new(classes: Vec<LandClass>) -> Result<Self> {
        if classes.is_empty() {
            return Err(LulcError::Config("class scheme is empty".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.id != i {
                return Err(LulcError::Config(format!(
                    "class '{}' has id {}, expected {i}",
                    c.name, c.id
                )));
            }
            if classes[..i].iter().any(|o| o.name.eq_ignore_ascii_case(&c.name)) {
                return Err(LulcError::Config(format!("duplicate class name '{}'", c.name)));
            }
        }
        Ok(ClassScheme { classes })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], colors: &[[u8; 3]]) -> Result<Self> {
        if names.len() != colors.len() {
            return Err(LulcError::Config("class names and colors differ in length".into()));
        }
        Self::new(
            names
                .iter()
                .zip(colors)
                .enumerate()
                .map(|(id, (n, &color))| LandClass {
                    id,
                    name: n.as_ref().to_string(),
                    color,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[LandClass] {
        &self.classes
    }

    pub fn get(&self, id: usize) -> Option<&LandClass> {
        self.classes.get(id)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.classes.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn palette(&self) -> Vec<[u8; 3]> {
        self.classes.iter().map(|c| c.color).collect()
    }
}

impl Default for ClassScheme {
    /// Urban Areas, Grass/Agricultural Land, Forest, Bare Soil, Water Bodies,
    /// Coastal Areas, Wetland.
    fn default() -> Self {
        ClassScheme::from_names(
            &[
                "Urban Areas",
                "Grass/Agricultural Land",
                "Forest",
                "Bare Soil",
                "Water Bodies",
                "Coastal Areas",
                "Wetland",
            ],
            &[
                [220, 20, 60],
                [144, 238, 144],
                [34, 139, 34],
                [210, 180, 140],
                [30, 144, 255],
                [255, 215, 0],
                [0, 128, 128],
            ],
        )
        .expect("default scheme is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPoint {
    pub col: usize,
    pub row: usize,
    pub class_id: usize,
    pub year: i32,
    pub source: String,
}

/// A `size x size x channels` window stored row-major as (y, x, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct Chip {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub center: (usize, usize),
    pub label: Option<usize>,
}

impl Chip {
    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.size + x) * self.channels + c]
    }

    /// The flattened input vector used by the dense models.
    pub fn as_vector(&self) -> &[f64] {
        &self.data
    }

    pub fn center_pixel(&self) -> &[f64] {
        let h = self.size / 2;
        let start = (h * self.size + h) * self.channels;
        &self.data[start..start + self.channels]
    }
}

/// Fills `out` with the chip centered at `(col, row)`. Out-of-grid positions
/// replicate the nearest edge pixel; masked neighbours take the center's values.
pub fn fill_chip(raster: &Raster, col: usize, row: usize, size: usize, out: &mut [f64]) {
    let channels = raster.band_count();
    let half = (size / 2) as isize;
    let (w, h) = (raster.width() as isize, raster.height() as isize);
    let center = raster.index(col, row);
    let mask = raster.mask();
    let bands = raster.bands();
    let mut k = 0;
    for dy in -half..=half {
        let r = (row as isize + dy).clamp(0, h - 1) as usize;
        for dx in -half..=half {
            let c = (col as isize + dx).clamp(0, w - 1) as usize;
            let mut idx = r * raster.width() + c;
            if !mask[idx] {
                idx = center;
            }
            for band in bands {
                out[k] = band.values[idx];
                k += 1;
            }
        }
    }
    debug_assert_eq!(k, size * size * channels);
}

fn check_chip_size(size: usize) -> Result<()> {
    if size == 0 || size % 2 == 0 {
        return Err(LulcError::Config(format!("chip size must be odd, got {size}")));
    }
    Ok(())
}

pub fn extract_chip(raster: &Raster, center: (usize, usize), size: usize) -> Result<Chip> {
    check_chip_size(size)?;
    let (col, row) = center;
    if col >= raster.width() || row >= raster.height() {
        return Err(LulcError::Bounds(format!(
            "center ({col}, {row}) outside {}x{} raster",
            raster.width(),
            raster.height()
        )));
    }
    let channels = raster.band_count();
    let mut data = vec![0.0; size * size * channels];
    fill_chip(raster, col, row, size, &mut data);
    Ok(Chip {
        size,
        channels,
        data,
        center,
        label: None,
    })
}

/// Every pixel's chip, in row-major pixel order.
pub fn iter_chips(raster: &Raster, size: usize) -> Result<impl Iterator<Item = Chip> + '_> {
    check_chip_size(size)?;
    let channels = raster.band_count();
    Ok((0..raster.height()).flat_map(move |row| {
        (0..raster.width()).map(move |col| {
            let mut data = vec![0.0; size * size * channels];
            fill_chip(raster, col, row, size, &mut data);
            Chip {
                size,
                channels,
                data,
                center: (col, row),
                label: None,
            }
        })
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
    Unlabeled,
}

impl SplitTag {
    pub(crate) fn to_u8(self) -> u8 {
        match self {
            SplitTag::Train => 0,
            SplitTag::Test => 1,
            SplitTag::Unlabeled => 2,
        }
    }

    pub(crate) fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(SplitTag::Train),
            1 => Some(SplitTag::Test),
            2 => Some(SplitTag::Unlabeled),
            _ => None,
        }
    }
}

/// Per-channel z-score parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population mean/std of every chip cell, per channel. Zero-variance
    /// channels get std 1.
    pub fn fit(dataset: &ChipDataset) -> Result<NormStats> {
        if dataset.chips.is_empty() {
            return Err(LulcError::EmptyInput("cannot normalize an empty dataset".into()));
        }
        let c = dataset.channels;
        let mut sum = vec![0.0; c];
        let mut count = 0usize;
        for chip in &dataset.chips {
            for px in chip.data.chunks_exact(c) {
                for (s, v) in sum.iter_mut().zip(px) {
                    *s += v;
                }
            }
            count += chip.size * chip.size;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; c];
        for chip in &dataset.chips {
            for px in chip.data.chunks_exact(c) {
                for ((s, v), m) in sq.iter_mut().zip(px).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn apply_in_place(&self, data: &mut [f64]) {
        let c = self.mean.len();
        for px in data.chunks_exact_mut(c) {
            for ((v, m), s) in px.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }

    /// Applies these statistics without refitting.
    pub fn apply(&self, dataset: &ChipDataset) -> Result<ChipDataset> {
        if dataset.channels != self.mean.len() {
            return Err(LulcError::Shape(format!(
                "normalization has {} channels, dataset has {}",
                self.mean.len(),
                dataset.channels
            )));
        }
        let mut out = dataset.clone();
        for chip in &mut out.chips {
            self.apply_in_place(&mut chip.data);
        }
        out.normalization = Some(self.clone());
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChipDataset {
    pub chips: Vec<Chip>,
    pub chip_size: usize,
    pub channels: usize,
    pub normalization: Option<NormStats>,
    pub split: SplitTag,
}

impl ChipDataset {
    pub fn new(chips: Vec<Chip>, chip_size: usize, channels: usize, split: SplitTag) -> Result<Self> {
        check_chip_size(chip_size)?;
        if let Some(bad) = chips.iter().find(|c| c.size != chip_size || c.channels != channels) {
            return Err(LulcError::Shape(format!(
                "chip {}x{}x{} in a {chip_size}x{chip_size}x{channels} dataset",
                bad.size, bad.size, bad.channels
            )));
        }
        Ok(ChipDataset {
            chips,
            chip_size,
            channels,
            normalization: None,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.chip_size * self.chip_size * self.channels
    }

    /// Labels of every chip; unlabeled chips are an error.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.chips
            .iter()
            .map(|c| {
                c.label
                    .ok_or_else(|| LulcError::Config(format!("chip at {:?} has no label", c.center)))
            })
            .collect()
    }

    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_classes];
        for c in &self.chips {
            if let Some(l) = c.label {
                if l < n_classes {
                    counts[l] += 1;
                }
            }
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> ChipDataset {
        ChipDataset {
            chips: indices.iter().map(|&i| self.chips[i].clone()).collect(),
            ..self.empty_like()
        }
    }

    fn empty_like(&self) -> ChipDataset {
        ChipDataset {
            chips: Vec::new(),
            chip_size: self.chip_size,
            channels: self.channels,
            normalization: self.normalization.clone(),
            split: self.split,
        }
    }
}

/// Fits per-channel z-score statistics on `dataset` and applies them.
pub fn normalize(dataset: &ChipDataset) -> Result<(ChipDataset, NormStats)> {
    let stats = NormStats::fit(dataset)?;
    Ok((stats.apply(dataset)?, stats))
}

/// Duplicates randomly chosen chips of `class_id` (with replacement) until
/// the class holds `target` chips. Other classes are untouched.
pub fn upsample_class(dataset: &ChipDataset, class_id: usize, target: usize, seed: u64) -> Result<ChipDataset> {
    let originals: Vec<usize> = (0..dataset.chips.len())
        .filter(|&i| dataset.chips[i].label == Some(class_id))
        .collect();
    if originals.is_empty() {
        return Err(LulcError::MissingClass(class_id));
    }
    let mut out = dataset.clone();
    if target <= originals.len() {
        return Ok(out);
    }
    let mut rng = seed::rng(seed, &format!("upsample/class{class_id}"));
    for _ in originals.len()..target {
        let pick = originals[rng.random_range(0..originals.len())];
        out.chips.push(dataset.chips[pick].clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnderfullPolicy {
    /// Split what is available in proportion, then up-sample the training part.
    Upsample,
    /// Split what is available in proportion and report it.
    Warn,
}

#[derive(Debug, Clone)]
pub struct SplitConfig {
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub chip_size: usize,
    pub underfull: UnderfullPolicy,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            per_class_train: 175,
            per_class_test: 75,
            chip_size: DEFAULT_CHIP_SIZE,
            underfull: UnderfullPolicy::Upsample,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnderfullClass {
    pub class_id: usize,
    pub available: usize,
    pub train: usize,
    pub test: usize,
    pub upsampled_to: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct LabeledSplit {
    pub train: ChipDataset,
    pub test: ChipDataset,
    pub underfull: Vec<UnderfullClass>,
    /// Points dropped because their pixel is masked in the raster.
    pub dropped_masked: usize,
}

/// Collapses duplicate labels on one pixel; conflicting classes are an error.
pub fn dedupe_points(points: &[LabeledPoint]) -> Result<Vec<LabeledPoint>> {
    let mut by_pixel: BTreeMap<(usize, usize), &LabeledPoint> = BTreeMap::new();
    for p in points {
        match by_pixel.get(&(p.row, p.col)) {
            Some(prev) if prev.class_id != p.class_id => {
                return Err(LulcError::Conflict(format!(
                    "pixel ({}, {}) labelled both {} and {}",
                    p.col, p.row, prev.class_id, p.class_id
                )));
            }
            Some(_) => {}
            None => {
                by_pixel.insert((p.row, p.col), p);
            }
        }
    }
    Ok(by_pixel.into_values().cloned().collect())
}

/// Stratified, seeded train/test split of labelled chips, disjoint by pixel.
///
/// Classes with fewer than `train + test` points are split in proportion;
/// under [`UnderfullPolicy::Upsample`] the training part is then up-sampled
/// to `per_class_train`. Test chips are never duplicated.
pub fn build_labeled_set(
    raster: &Raster,
    points: &[LabeledPoint],
    scheme: &ClassScheme,
    cfg: &SplitConfig,
) -> Result<LabeledSplit> {
    check_chip_size(cfg.chip_size)?;
    if cfg.per_class_train == 0 {
        return Err(LulcError::Config("per-class training count must be positive".into()));
    }
    for p in points {
        if p.col >= raster.width() || p.row >= raster.height() {
            return Err(LulcError::Bounds(format!(
                "label at ({}, {}) outside raster",
                p.col, p.row
            )));
        }
        if p.class_id >= scheme.len() {
            return Err(LulcError::Config(format!("label class {} not in scheme", p.class_id)));
        }
    }
    let unique = dedupe_points(points)?;
    let before = unique.len();
    let usable: Vec<LabeledPoint> = unique.into_iter().filter(|p| raster.is_valid(p.col, p.row)).collect();
    let dropped_masked = before - usable.len();
    if dropped_masked > 0 {
        tracing::warn!(dropped = dropped_masked, "labels on masked pixels ignored");
    }

    let channels = raster.band_count();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut underfull = Vec::new();
    let wanted = cfg.per_class_train + cfg.per_class_test;

    for class in scheme.classes() {
        let mut members: Vec<&LabeledPoint> = usable.iter().filter(|p| p.class_id == class.id).collect();
        if members.is_empty() {
            return Err(LulcError::MissingClass(class.id));
        }
        let mut rng = seed::rng(cfg.seed, &format!("split/class{}", class.id));
        members.shuffle(&mut rng);

        let n = members.len();
        let (n_train, n_test) = if n >= wanted {
            (cfg.per_class_train, cfg.per_class_test)
        } else {
            let mut t = ((n * cfg.per_class_test) as f64 / wanted as f64).round() as usize;
            if n >= 2 {
                t = t.clamp(if cfg.per_class_test > 0 { 1 } else { 0 }, n - 1);
            } else {
                t = 0;
            }
            (n - t, t)
        };

        let to_chip = |p: &LabeledPoint| -> Result<Chip> {
            let mut chip = extract_chip(raster, (p.col, p.row), cfg.chip_size)?;
            chip.label = Some(p.class_id);
            Ok(chip)
        };
        let mut class_train = members[..n_train]
            .iter()
            .map(|p| to_chip(p))
            .collect::<Result<Vec<_>>>()?;
        let class_test = members[n_train..n_train + n_test]
            .iter()
            .map(|p| to_chip(p))
            .collect::<Result<Vec<_>>>()?;

        if n < wanted {
            let mut report = UnderfullClass {
                class_id: class.id,
                available: n,
                train: n_train,
                test: n_test,
                upsampled_to: None,
            };
            if cfg.underfull == UnderfullPolicy::Upsample && n_train < cfg.per_class_train {
                let ds = ChipDataset::new(class_train, cfg.chip_size, channels, SplitTag::Train)?;
                class_train = upsample_class(&ds, class.id, cfg.per_class_train, cfg.seed)?.chips;
                report.upsampled_to = Some(cfg.per_class_train);
            } else {
                tracing::warn!(class = class.id, available = n, "class has fewer labels than requested");
            }
            underfull.push(report);
        }
        train.extend(class_train);
        test.extend(class_test);
    }

    Ok(LabeledSplit {
        train: ChipDataset::new(train, cfg.chip_size, channels, SplitTag::Train)?,
        test: ChipDataset::new(test, cfg.chip_size, channels, SplitTag::Test)?,
        underfull,
        dropped_masked,
    })
}

/// The `m >= 10 n C` rule of thumb: `n` input types, `C` output classes.
pub fn minimum_sample_size(n_inputs: usize, n_classes: usize) -> usize {
    10 * n_inputs * n_classes
}

/// Cochran's sample size for a proportion with finite-population correction.
pub fn cochran_sample_size(population: u64, z: f64, margin: f64, proportion: f64) -> u64 {
    let n0 = z * z * proportion * (1.0 - proportion) / (margin * margin);
    let n = n0 / (1.0 + (n0 - 1.0) / population as f64);
    n.ceil() as u64
}

/// Sample sizes of the sample-size sweep (70, 100, 150, 200, 250 per class).
pub const SWEEP_SIZES: [usize; 5] = [490, 700, 1050, 1400, 1750];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Band, GeoRef};

    fn grid(width: usize, height: usize, channels: usize) -> Raster {
        let bands = (0..channels)
            .map(|c| {
                Band::new(
                    format!("c{c}"),
                    (0..width * height).map(|i| (i * 10 + c) as f64).collect(),
                )
            })
            .collect();
        Raster::from_bands(width, height, bands, GeoRef::default()).unwrap()
    }

    #[test]
    fn default_scheme() {
        let s = ClassScheme::default();
        assert_eq!(s.len(), 7);
        assert_eq!(s.id_of("coastal areas"), Some(5));
        assert_eq!(s.get(0).unwrap().name, "Urban Areas");
    }

    #[test]
    fn interior_chip_is_raw_neighbourhood() {
        let r = grid(20, 20, 2);
        let chip = extract_chip(&r, (10, 10), 9).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                for c in 0..2 {
                    assert_eq!(chip.get(y, x, c), r.value(c, 6 + x, 6 + y));
                }
            }
        }
        assert_eq!(chip.center_pixel(), &[r.value(0, 10, 10), r.value(1, 10, 10)]);
    }

    #[test]
    fn corner_chip_replicates_edges() {
        let r = grid(5, 5, 1);
        let chip = extract_chip(&r, (0, 0), 9).unwrap();
        assert_eq!(chip.data.len(), 81);
        for y in 0..9 {
            for x in 0..9 {
                let (sx, sy) = (
                    (x as usize).saturating_sub(4).min(4),
                    (y as usize).saturating_sub(4).min(4),
                );
                assert_eq!(chip.get(y, x, 0), r.value(0, sx, sy));
            }
        }
    }

    #[test]
    fn chip_bounds_and_size() {
        let r = grid(5, 5, 1);
        assert!(matches!(extract_chip(&r, (5, 0), 9), Err(LulcError::Bounds(_))));
        assert!(extract_chip(&r, (0, 0), 8).is_err());
        assert_eq!(iter_chips(&r, 3).unwrap().count(), 25);
    }

    #[test]
    fn masked_neighbours_take_center_values() {
        let mut mask = vec![true; 9];
        mask[0] = false;
        let r = grid(3, 3, 1).with_mask(mask).unwrap();
        let chip = extract_chip(&r, (1, 1), 3).unwrap();
        assert_eq!(chip.get(0, 0, 0), r.value(0, 1, 1));
        assert_eq!(chip.get(0, 1, 0), r.value(0, 1, 0));
    }

    #[test]
    fn sample_size_rules() {
        assert_eq!(minimum_sample_size(7, 7), 490);
        assert_eq!(minimum_sample_size(1, 1), 10);
        assert_eq!(cochran_sample_size(638_040, 1.96, 0.05, 0.5), 384);
    }

    #[test]
    fn normalization_degenerate_channel() {
        let r = Raster::from_bands(3, 3, vec![Band::new("k", vec![4.0; 9])], GeoRef::default()).unwrap();
        let chips = iter_chips(&r, 3).unwrap().collect();
        let ds = ChipDataset::new(chips, 3, 1, SplitTag::Train).unwrap();
        let (norm, stats) = normalize(&ds).unwrap();
        assert_eq!(stats.std, vec![1.0]);
        assert!(norm.chips.iter().all(|c| c.data.iter().all(|&v| v == 0.0)));
        let empty = ChipDataset::new(vec![], 3, 1, SplitTag::Train).unwrap();
        assert!(matches!(normalize(&empty), Err(LulcError::EmptyInput(_))));
    }

    #[test]
    fn conflicting_duplicate_labels() {
        let p = |class_id| LabeledPoint {
            col: 1,
            row: 1,
            class_id,
            year: 2020,
            source: "t".into(),
        };
        assert_eq!(dedupe_points(&[p(1), p(1)]).unwrap().len(), 1);
        assert!(matches!(dedupe_points(&[p(1), p(2)]), Err(LulcError::Conflict(_))));
    }
}
