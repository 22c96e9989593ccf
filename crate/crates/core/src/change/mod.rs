//! Per-year class maps, the urban-expansion map, class proportions,
//! transition counts and map rendering.

use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{fill_chip, ClassScheme};
use crate::error::{LulcError, Result};
use crate::models::TrainedModel;
use crate::raster::{write_geotiff, Band, GeoRef, Raster};
use crate::render::write_indexed_png;
use crate::seed::digest_hex;

pub const MASKED_COLOR: [u8; 3] = [0, 0, 0];
pub const NEVER_COLOR: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    pub year: i32,
    pub width: usize,
    pub height: usize,
    /// Row-major class ids; `None` where the input was masked.
    pub cells: Vec<Option<usize>>,
    pub geo: GeoRef,
    pub scheme: ClassScheme,
    pub provenance: String,
}

impl ClassMap {
    pub fn new(
        year: i32,
        width: usize,
        height: usize,
        cells: Vec<Option<usize>>,
        geo: GeoRef,
        scheme: ClassScheme,
    ) -> Result<Self> {
        if cells.len() != width * height {
            return Err(LulcError::Shape(format!("{} cells for {width}x{height}", cells.len())));
        }
        if let Some(c) = cells.iter().flatten().find(|&&c| c >= scheme.len()) {
            return Err(LulcError::Config(format!("class id {c} not in scheme")));
        }
        Ok(ClassMap {
            year,
            width,
            height,
            cells,
            geo,
            scheme,
            provenance: String::new(),
        })
    }

    pub fn classified_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.scheme.len()];
        for &c in self.cells.iter().flatten() {
            counts[c] += 1;
        }
        counts
    }

    /// Single `class_id` band; masked cells stay masked.
    pub fn to_raster(&self) -> Result<Raster> {
        let values = self.cells.iter().map(|c| c.map_or(0.0, |c| c as f64)).collect();
        let mask = self.cells.iter().map(Option::is_some).collect();
        Raster::new(
            self.width,
            self.height,
            vec![Band::new("class_id", values)],
            mask,
            self.geo.clone(),
        )
    }

    pub fn write_geotiff(&self, path: impl AsRef<Path>) -> Result<()> {
        write_geotiff(&self.to_raster()?, path)
    }

    /// Inverse of [`ClassMap::to_raster`].
    pub fn from_raster(raster: &Raster, year: i32, scheme: ClassScheme) -> Result<Self> {
        let band = raster.band("class_id")?;
        let cells = band
            .values
            .iter()
            .zip(raster.mask())
            .map(|(&v, &ok)| {
                if !ok {
                    return Ok(None);
                }
                if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                    return Err(LulcError::Format(format!("class id {v} is not a non-negative integer")));
                }
                Ok(Some(v as usize))
            })
            .collect::<Result<Vec<_>>>()?;
        ClassMap::new(
            year,
            raster.width(),
            raster.height(),
            cells,
            raster.geo().clone(),
            scheme,
        )
    }

    fn same_shape(&self, other: &ClassMap) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(LulcError::Shape(format!(
                "maps {}x{} and {}x{} differ",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Predicts every valid pixel from its chip; masked pixels stay masked.
pub fn classify_map(raster: &Raster, model: &TrainedModel, year: i32, scheme: &ClassScheme) -> Result<ClassMap> {
    if raster.band_count() != model.channels {
        return Err(LulcError::Shape(format!(
            "raster has {} channels, model expects {}",
            raster.band_count(),
            model.channels
        )));
    }
    if model.n_outputs() > scheme.len() {
        return Err(LulcError::Config(format!(
            "model predicts {} classes, scheme has {}",
            model.n_outputs(),
            scheme.len()
        )));
    }
    let w = raster.width();
    let dim = model.input_dim();
    let cells: Vec<Option<usize>> = (0..raster.height())
        .into_par_iter()
        .flat_map_iter(|row| {
            let mut buf = vec![0.0; dim];
            (0..w)
                .map(|col| {
                    if !raster.is_valid(col, row) {
                        return None;
                    }
                    fill_chip(raster, col, row, model.chip_size, &mut buf);
                    Some(model.predict_one(&buf))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut map = ClassMap::new(year, w, raster.height(), cells, raster.geo().clone(), scheme.clone())?;
    map.provenance = format!("{}:{}", model.kind(), digest_hex(&model.to_bytes()));
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionCell {
    /// Masked in the final year.
    Masked,
    /// Not urban in the final year.
    Never,
    /// Urban in the final year; first year it was classified urban.
    Since(i32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionMap {
    pub width: usize,
    pub height: usize,
    pub years: Vec<i32>,
    pub cells: Vec<ExpansionCell>,
    /// Urban-to-non-urban transitions per pixel across the series.
    pub flicker: Vec<u32>,
    pub geo: GeoRef,
}

impl ExpansionMap {
    pub fn count_since(&self, year: i32) -> usize {
        self.cells.iter().filter(|&&c| c == ExpansionCell::Since(year)).count()
    }

    /// `first_urban_year` band; never-urban cells hold 0, masked cells are masked.
    pub fn to_raster(&self) -> Result<Raster> {
        let values = self
            .cells
            .iter()
            .map(|c| match c {
                ExpansionCell::Since(y) => *y as f64,
                _ => 0.0,
            })
            .collect();
        let mask = self.cells.iter().map(|c| *c != ExpansionCell::Masked).collect();
        Raster::new(
            self.width,
            self.height,
            vec![Band::new("first_urban_year", values)],
            mask,
            self.geo.clone(),
        )
    }

    pub fn write_geotiff(&self, path: impl AsRef<Path>) -> Result<()> {
        write_geotiff(&self.to_raster()?, path)
    }

    /// Inverse of [`ExpansionMap::to_raster`]; flicker counts are not stored
    /// and come back as zero.
    pub fn from_raster(raster: &Raster, years: Vec<i32>) -> Result<Self> {
        let band = raster.band("first_urban_year")?;
        let cells = band
            .values
            .iter()
            .zip(raster.mask())
            .map(|(&v, &ok)| match (ok, v) {
                (false, _) => Ok(ExpansionCell::Masked),
                (true, 0.0) => Ok(ExpansionCell::Never),
                (true, y) if years.contains(&(y as i32)) && y.fract() == 0.0 => Ok(ExpansionCell::Since(y as i32)),
                (true, y) => Err(LulcError::Format(format!("first urban year {y} not among {years:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExpansionMap {
            width: raster.width(),
            height: raster.height(),
            years,
            flicker: vec![0; cells.len()],
            cells,
            geo: raster.geo().clone(),
        })
    }
}

/// First urban year of every pixel that is urban in the final year.
pub fn urban_expansion(maps: &[ClassMap], urban: usize) -> Result<ExpansionMap> {
    if maps.len() < 2 {
        return Err(LulcError::InsufficientData(format!(
            "expansion needs at least 2 yearly maps, got {}",
            maps.len()
        )));
    }
    for pair in maps.windows(2) {
        pair[0].same_shape(&pair[1])?;
        if pair[1].year <= pair[0].year {
            return Err(LulcError::Config("class maps must be in increasing year order".into()));
        }
    }
    let last = maps.last().unwrap();
    let n = last.cells.len();
    let mut cells = Vec::with_capacity(n);
    let mut flicker = Vec::with_capacity(n);
    for i in 0..n {
        let mut first = None;
        let mut was_urban = false;
        let mut flips = 0;
        for m in maps {
            match m.cells[i] {
                Some(c) if c == urban => {
                    first.get_or_insert(m.year);
                    was_urban = true;
                }
                Some(_) => {
                    if was_urban {
                        flips += 1;
                    }
                    was_urban = false;
                }
                None => {}
            }
        }
        cells.push(match last.cells[i] {
            None => ExpansionCell::Masked,
            Some(c) if c == urban => ExpansionCell::Since(first.expect("final year is urban")),
            Some(_) => ExpansionCell::Never,
        });
        flicker.push(flips);
    }
    Ok(ExpansionMap {
        width: last.width,
        height: last.height,
        years: maps.iter().map(|m| m.year).collect(),
        cells,
        flicker,
        geo: last.geo.clone(),
    })
}

/// Intersection over union of the urban cells of two expansion maps, where
/// a cell only matches if both maps give it the same first year.
pub fn expansion_iou(a: &ExpansionMap, b: &ExpansionMap) -> Result<f64> {
    if a.cells.len() != b.cells.len() {
        return Err(LulcError::Shape("expansion maps differ in size".into()));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.cells.iter().zip(&b.cells) {
        let (ux, uy) = (
            matches!(x, ExpansionCell::Since(_)),
            matches!(y, ExpansionCell::Since(_)),
        );
        if ux || uy {
            union += 1;
            if x == y {
                inter += 1;
            }
        }
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearShares {
    pub year: i32,
    pub shares: Vec<f64>,
    pub classified: u64,
}

/// Per-year class shares over unmasked pixels.
pub fn class_proportions(maps: &[ClassMap]) -> Vec<YearShares> {
    maps.iter()
        .map(|m| {
            let counts = m.class_counts();
            let total: u64 = counts.iter().sum();
            let shares = counts
                .iter()
                .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
                .collect();
            YearShares {
                year: m.year,
                shares,
                classified: total,
            }
        })
        .collect()
}

/// `counts[i * C + j]` = pixels of class `i` in `a` and class `j` in `b`,
/// over pixels unmasked in both.
pub fn transition_matrix(a: &ClassMap, b: &ClassMap) -> Result<Vec<u64>> {
    a.same_shape(b)?;
    let c = a.scheme.len().max(b.scheme.len());
    let mut counts = vec![0u64; c * c];
    for (x, y) in a.cells.iter().zip(&b.cells) {
        if let (Some(i), Some(j)) = (x, y) {
            counts[i * c + j] += 1;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeProduct {
    pub expansion: ExpansionMap,
    pub proportions: Vec<YearShares>,
    /// Consecutive year pairs with their transition counts.
    pub transitions: Vec<((i32, i32), Vec<u64>)>,
}

pub fn change_product(maps: &[ClassMap], urban: usize) -> Result<ChangeProduct> {
    let expansion = urban_expansion(maps, urban)?;
    let transitions = maps
        .windows(2)
        .map(|p| Ok(((p[0].year, p[1].year), transition_matrix(&p[0], &p[1])?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChangeProduct {
        expansion,
        proportions: class_proportions(maps),
        transitions,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| LulcError::io(path, e))
}

pub fn write_proportions_csv(path: impl AsRef<Path>, props: &[YearShares], scheme: &ClassScheme) -> Result<()> {
    let mut s = String::from("year");
    for c in scheme.classes() {
        s.push(',');
        s.push_str(&csv_field(&c.name));
    }
    s.push('\n');
    for p in props {
        s.push_str(&p.year.to_string());
        for v in &p.shares {
            s.push_str(&format!(",{v:.12}"));
        }
        s.push('\n');
    }
    write_text(path.as_ref(), &s)
}

pub fn write_transitions_csv(
    path: impl AsRef<Path>,
    transitions: &[((i32, i32), Vec<u64>)],
    scheme: &ClassScheme,
) -> Result<()> {
    let c = scheme.len();
    let mut s = String::from("from_year,to_year,from_class,to_class,pixels\n");
    for ((y0, y1), counts) in transitions {
        for i in 0..c {
            for j in 0..c {
                s.push_str(&format!(
                    "{y0},{y1},{},{},{}\n",
                    csv_field(&scheme.classes()[i].name),
                    csv_field(&scheme.classes()[j].name),
                    counts[i * c + j]
                ));
            }
        }
    }
    write_text(path.as_ref(), &s)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn legend_path(png: &Path) -> std::path::PathBuf {
    let mut name = png.file_name().unwrap_or_default().to_os_string();
    name.push(".legend.csv");
    png.with_file_name(name)
}

fn write_legend(png: &Path, entries: &[(String, [u8; 3])]) -> Result<()> {
    let mut s = String::from("index,label,r,g,b\n");
    for (i, (label, c)) in entries.iter().enumerate() {
        s.push_str(&format!("{i},{},{},{},{}\n", csv_field(label), c[0], c[1], c[2]));
    }
    write_text(&legend_path(png), &s)
}

/// Indexed PNG of a class map plus a `<name>.legend.csv` sidecar. Index `C`
/// (one past the last class) is the masked color.
pub fn render_class_map(path: impl AsRef<Path>, map: &ClassMap, palette: &[[u8; 3]]) -> Result<()> {
    let path = path.as_ref();
    let c = map.scheme.len();
    if palette.len() < c {
        return Err(LulcError::Config(format!(
            "palette has {} colors for {c} classes",
            palette.len()
        )));
    }
    let mut colors: Vec<[u8; 3]> = palette[..c].to_vec();
    colors.push(MASKED_COLOR);
    let idx: Vec<u8> = map.cells.iter().map(|v| v.map_or(c as u8, |v| v as u8)).collect();
    write_indexed_png(path, map.width, map.height, &colors, &idx)?;
    let mut legend: Vec<(String, [u8; 3])> = map
        .scheme
        .classes()
        .iter()
        .map(|k| k.name.clone())
        .zip(colors.iter().copied())
        .collect();
    legend.push(("masked".into(), MASKED_COLOR));
    write_legend(path, &legend)
}

/// Color of the `i`-th of `n` years on a yellow-to-dark-red ramp.
pub fn year_color(i: usize, n: usize) -> [u8; 3] {
    let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    [lerp(255.0, 128.0), lerp(220.0, 0.0), lerp(0.0, 38.0)]
}

/// Indexed PNG of an expansion map: white = never urban, black = masked,
/// one ramp color per year.
pub fn render_expansion(path: impl AsRef<Path>, map: &ExpansionMap) -> Result<()> {
    let path = path.as_ref();
    let n = map.years.len();
    let mut legend = vec![("never".to_string(), NEVER_COLOR), ("masked".to_string(), MASKED_COLOR)];
    legend.extend(
        map.years
            .iter()
            .enumerate()
            .map(|(i, y)| (y.to_string(), year_color(i, n))),
    );
    let idx = map
        .cells
        .iter()
        .map(|c| match c {
            ExpansionCell::Never => Ok(0u8),
            ExpansionCell::Masked => Ok(1u8),
            ExpansionCell::Since(y) => map
                .years
                .iter()
                .position(|v| v == y)
                .map(|p| (p + 2) as u8)
                .ok_or_else(|| LulcError::Config(format!("year {y} has no palette entry"))),
        })
        .collect::<Result<Vec<u8>>>()?;
    let colors: Vec<[u8; 3]> = legend.iter().map(|l| l.1).collect();
    write_indexed_png(path, map.width, map.height, &colors, &idx)?;
    write_legend(path, &legend)
}
