//! Normalized-difference spectral indices.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{LulcError, Result};
use crate::raster::{Band, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndexKind {
    Ndvi,
    Ndwi,
    Mndwi,
    Ndbi,
}

impl IndexKind {
    pub const ALL: [IndexKind; 4] = [IndexKind::Ndvi, IndexKind::Ndwi, IndexKind::Mndwi, IndexKind::Ndbi];

    /// The channels appended to the seven reflectance bands by default.
    pub const DEFAULT_FEATURES: [IndexKind; 3] = [IndexKind::Ndvi, IndexKind::Mndwi, IndexKind::Ndbi];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Ndvi => "NDVI",
            IndexKind::Ndwi => "NDWI",
            IndexKind::Mndwi => "MNDWI",
            IndexKind::Ndbi => "NDBI",
        }
    }

    /// Logical `(A, B)` operands of `(A - B) / (A + B)`. SWIR means SWIR-1.
    pub fn operands(self) -> (&'static str, &'static str) {
        match self {
            IndexKind::Ndvi => ("nir", "red"),
            IndexKind::Ndwi => ("green", "nir"),
            IndexKind::Mndwi => ("green", "swir1"),
            IndexKind::Ndbi => ("swir1", "nir"),
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndexKind {
    type Err = LulcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ndvi" => Ok(IndexKind::Ndvi),
            "ndwi" => Ok(IndexKind::Ndwi),
            "mndwi" => Ok(IndexKind::Mndwi),
            "ndbi" => Ok(IndexKind::Ndbi),
            other => Err(LulcError::Config(format!("unknown index '{other}'"))),
        }
    }
}

/// Maps logical band names (`nir`, `red`, ...) to the names used in a file.
/// Unmapped names resolve to themselves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BandMap {
    map: BTreeMap<String, String>,
}

impl BandMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Landsat Collection-2 surface reflectance export names.
    pub fn landsat8_sr() -> Self {
        let mut m = BandMap::new();
        for (logical, file) in [
            ("coastal", "SR_B1"),
            ("blue", "SR_B2"),
            ("green", "SR_B3"),
            ("red", "SR_B4"),
            ("nir", "SR_B5"),
            ("swir1", "SR_B6"),
            ("swir2", "SR_B7"),
            ("qa", "QA_PIXEL"),
        ] {
            m.insert(logical, file);
        }
        m
    }

    pub fn insert(&mut self, logical: impl Into<String>, actual: impl Into<String>) {
        self.map.insert(logical.into(), actual.into());
    }

    pub fn resolve<'a>(&'a self, logical: &'a str) -> &'a str {
        self.map.get(logical).map(String::as_str).unwrap_or(logical)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for BandMap {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut m = BandMap::new();
        for (k, v) in iter {
            m.insert(k, v);
        }
        m
    }
}

/// `name = (a - b) / (a + b)` over two named bands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRecipe {
    pub name: String,
    pub a: String,
    pub b: String,
}

impl IndexRecipe {
    pub fn new(name: impl Into<String>, a: impl Into<String>, b: impl Into<String>) -> Self {
        IndexRecipe {
            name: name.into(),
            a: a.into(),
            b: b.into(),
        }
    }

    pub fn for_kind(kind: IndexKind, bands: &BandMap) -> Self {
        let (a, b) = kind.operands();
        IndexRecipe::new(kind.name(), bands.resolve(a), bands.resolve(b))
    }

    pub fn swapped(&self) -> Self {
        IndexRecipe::new(format!("{}_swapped", self.name), self.b.clone(), self.a.clone())
    }
}

pub fn default_recipes(bands: &BandMap) -> Vec<IndexRecipe> {
    IndexKind::DEFAULT_FEATURES
        .iter()
        .map(|&k| IndexRecipe::for_kind(k, bands))
        .collect()
}

/// An index band plus its own validity: false where the input is masked or
/// the denominator is zero. Values at invalid pixels are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexLayer {
    pub band: Band,
    pub valid: Vec<bool>,
}

pub fn normalized_difference(raster: &Raster, recipe: &IndexRecipe) -> Result<IndexLayer> {
    let a = raster.band(&recipe.a)?;
    let b = raster.band(&recipe.b)?;
    let mut values = Vec::with_capacity(raster.pixel_count());
    let mut valid = Vec::with_capacity(raster.pixel_count());
    for ((&x, &y), &ok) in a.values.iter().zip(&b.values).zip(raster.mask()) {
        let den = x + y;
        if ok && den != 0.0 {
            values.push((x - y) / den);
            valid.push(true);
        } else {
            values.push(0.0);
            valid.push(false);
        }
    }
    Ok(IndexLayer {
        band: Band::new(recipe.name.clone(), values),
        valid,
    })
}

pub fn compute(raster: &Raster, kind: IndexKind, bands: &BandMap) -> Result<IndexLayer> {
    normalized_difference(raster, &IndexRecipe::for_kind(kind, bands))
}

/// (NIR - R) / (NIR + R) on bands named `nir` and `red`.
pub fn ndvi(raster: &Raster) -> Result<IndexLayer> {
    compute(raster, IndexKind::Ndvi, &BandMap::new())
}

/// (G - NIR) / (G + NIR) on bands named `green` and `nir`.
pub fn ndwi(raster: &Raster) -> Result<IndexLayer> {
    compute(raster, IndexKind::Ndwi, &BandMap::new())
}

/// (G - SWIR1) / (G + SWIR1) on bands named `green` and `swir1`.
pub fn mndwi(raster: &Raster) -> Result<IndexLayer> {
    compute(raster, IndexKind::Mndwi, &BandMap::new())
}

/// (SWIR1 - NIR) / (SWIR1 + NIR) on bands named `swir1` and `nir`.
pub fn ndbi(raster: &Raster) -> Result<IndexLayer> {
    compute(raster, IndexKind::Ndbi, &BandMap::new())
}

/// Appends one band per recipe. The output mask also excludes pixels where
/// any appended index is undefined.
pub fn append_feature_bands(raster: &Raster, recipes: &[IndexRecipe]) -> Result<Raster> {
    let mut bands = raster.bands().to_vec();
    let mut mask = raster.mask().to_vec();
    for recipe in recipes {
        if bands.iter().any(|b| b.name == recipe.name) {
            return Err(LulcError::NameCollision(recipe.name.clone()));
        }
        let layer = normalized_difference(raster, recipe)?;
        for (m, &v) in mask.iter_mut().zip(&layer.valid) {
            *m &= v;
        }
        bands.push(layer.band);
    }
    Raster::new(raster.width(), raster.height(), bands, mask, raster.geo().clone())
}
