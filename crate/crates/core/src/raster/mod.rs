//! Multiband georeferenced rasters with a per-pixel validity mask.
//!
//! Values are always held as `f64`. Nodata exists only as the mask; file
//! sentinels are handled by the readers and writers in [`geotiff`] and
//! [`portable`].

pub mod geotiff;
pub mod portable;

use crate::error::{LulcError, Result};

pub use geotiff::{read_geotiff, write_geotiff};
pub use portable::{read_portable, write_portable};

/// The seven Landsat-8 OLI reflectance bands used by the pipeline, with
/// their wavelength ranges in micrometers.
pub const OLI_BANDS: [(&str, (f64, f64)); 7] = [
    ("coastal", (0.43, 0.45)),
    ("blue", (0.45, 0.51)),
    ("green", (0.53, 0.59)),
    ("red", (0.64, 0.67)),
    ("nir", (0.85, 0.88)),
    ("swir1", (1.57, 1.65)),
    ("swir2", (2.11, 2.29)),
];

pub const DEFAULT_CRS: &str = "EPSG:4326";

/// Georeferencing of the pixel grid. `origin` is the center of pixel (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct GeoRef {
    pub crs: String,
    pub origin: (f64, f64),
    pub pixel_size: (f64, f64),
}

impl GeoRef {
    pub fn new(crs: impl Into<String>, origin: (f64, f64), pixel_size: (f64, f64)) -> Result<Self> {
        let geo = GeoRef {
            crs: crs.into(),
            origin,
            pixel_size,
        };
        geo.validate()?;
        Ok(geo)
    }

    fn validate(&self) -> Result<()> {
        if self.crs.trim().is_empty() {
            return Err(LulcError::Format("empty CRS identifier".into()));
        }
        let (dx, dy) = self.pixel_size;
        if dx == 0.0 || dy == 0.0 || !dx.is_finite() || !dy.is_finite() {
            return Err(LulcError::Format(format!("invalid pixel size ({dx}, {dy})")));
        }
        if !self.origin.0.is_finite() || !self.origin.1.is_finite() {
            return Err(LulcError::Format("non-finite origin".into()));
        }
        Ok(())
    }

    /// Map coordinates of the center of pixel `(col, row)`.
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin.0 + col as f64 * self.pixel_size.0,
            self.origin.1 + row as f64 * self.pixel_size.1,
        )
    }

    /// Pixel containing the map coordinate, possibly outside the grid.
    pub fn pixel_of(&self, x: f64, y: f64) -> (i64, i64) {
        let col = ((x - self.origin.0) / self.pixel_size.0).round();
        let row = ((y - self.origin.1) / self.pixel_size.1).round();
        (col as i64, row as i64)
    }
}

impl Default for GeoRef {
    /// Roughly 30 m pixels in geographic degrees.
    fn default() -> Self {
        GeoRef {
            crs: DEFAULT_CRS.to_string(),
            origin: (0.0, 0.0),
            pixel_size: (0.00025, -0.00025),
        }
    }
}

/// A named grid of values sharing the dimensions of its raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: String,
    pub wavelength: Option<(f64, f64)>,
    pub values: Vec<f64>,
}

impl Band {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Band {
            name: name.into(),
            wavelength: None,
            values,
        }
    }

    pub fn with_wavelength(mut self, lo: f64, hi: f64) -> Self {
        self.wavelength = Some((lo, hi));
        self
    }
}

/// Pixel rectangle `(col, row, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
}

impl Window {
    pub fn new(col: usize, row: usize, width: usize, height: usize) -> Self {
        Window {
            col,
            row,
            width,
            height,
        }
    }

    /// Window `inner`, expressed relative to `self`, in the coordinates of `self`'s parent.
    pub fn compose(&self, inner: Window) -> Window {
        Window::new(self.col + inner.col, self.row + inner.row, inner.width, inner.height)
    }
}

#[derive(Debug, Clone)]
pub struct Raster {
    width: usize,
    height: usize,
    bands: Vec<Band>,
    mask: Vec<bool>,
    geo: GeoRef,
}

impl Raster {
    pub fn new(width: usize, height: usize, bands: Vec<Band>, mask: Vec<bool>, geo: GeoRef) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(LulcError::Shape(format!(
                "raster must be non-empty, got {width}x{height}"
            )));
        }
        if bands.is_empty() {
            return Err(LulcError::Shape("raster needs at least one band".into()));
        }
        let n = width * height;
        if mask.len() != n {
            return Err(LulcError::Shape(format!("mask has {} cells, expected {n}", mask.len())));
        }
        for (i, band) in bands.iter().enumerate() {
            if band.values.len() != n {
                return Err(LulcError::Shape(format!(
                    "band '{}' has {} cells, expected {n}",
                    band.name,
                    band.values.len()
                )));
            }
            if bands[..i].iter().any(|b| b.name == band.name) {
                return Err(LulcError::NameCollision(band.name.clone()));
            }
            if let Some(p) = band.values.iter().zip(&mask).position(|(v, &ok)| ok && !v.is_finite()) {
                return Err(LulcError::Format(format!(
                    "band '{}' has non-finite value at valid pixel {p}",
                    band.name
                )));
            }
        }
        geo.validate()?;
        Ok(Raster {
            width,
            height,
            bands,
            mask,
            geo,
        })
    }

    /// Raster with every pixel valid.
    pub fn from_bands(width: usize, height: usize, bands: Vec<Band>, geo: GeoRef) -> Result<Self> {
        Raster::new(width, height, bands, vec![true; width * height], geo)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band_names(&self) -> Vec<&str> {
        self.bands.iter().map(|b| b.name.as_str()).collect()
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.bands.iter().position(|b| b.name == name)
    }

    pub fn band(&self, name: &str) -> Result<&Band> {
        self.bands
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| LulcError::BandNotFound(name.to_string()))
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn geo(&self) -> &GeoRef {
        &self.geo
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn value(&self, band: usize, col: usize, row: usize) -> f64 {
        self.bands[band].values[row * self.width + col]
    }

    #[inline]
    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Same pixels, replaced mask.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Raster> {
        Raster::new(self.width, self.height, self.bands.clone(), mask, self.geo.clone())
    }

    /// Appends a band; the new band must not reuse an existing name.
    pub fn with_band(&self, band: Band) -> Result<Raster> {
        if self.band_index(&band.name).is_some() {
            return Err(LulcError::NameCollision(band.name));
        }
        let mut bands = self.bands.clone();
        bands.push(band);
        Raster::new(self.width, self.height, bands, self.mask.clone(), self.geo.clone())
    }

    /// Keeps only the named bands, in the given order.
    pub fn select_bands(&self, names: &[&str]) -> Result<Raster> {
        let bands = names
            .iter()
            .map(|n| self.band(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        Raster::new(self.width, self.height, bands, self.mask.clone(), self.geo.clone())
    }

    pub fn same_grid(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height && self.geo == other.geo
    }

    pub fn clip(&self, window: Window) -> Result<Raster> {
        if window.width == 0
            || window.height == 0
            || window.col + window.width > self.width
            || window.row + window.height > self.height
        {
            return Err(LulcError::Bounds(format!(
                "window {window:?} outside {}x{} raster",
                self.width, self.height
            )));
        }
        let take = |src: &[f64]| -> Vec<f64> {
            (window.row..window.row + window.height)
                .flat_map(|r| {
                    let start = r * self.width + window.col;
                    src[start..start + window.width].iter().copied()
                })
                .collect()
        };
        let bands = self
            .bands
            .iter()
            .map(|b| Band {
                name: b.name.clone(),
                wavelength: b.wavelength,
                values: take(&b.values),
            })
            .collect();
        let mask = (window.row..window.row + window.height)
            .flat_map(|r| {
                let start = r * self.width + window.col;
                self.mask[start..start + window.width].iter().copied()
            })
            .collect();
        let geo = GeoRef {
            crs: self.geo.crs.clone(),
            origin: self.geo.pixel_center(window.col, window.row),
            pixel_size: self.geo.pixel_size,
        };
        Raster::new(window.width, window.height, bands, mask, geo)
    }
}

/// Equality of observed content: shape, band metadata, mask, georeferencing,
/// and values at valid pixels. Values under the mask carry no information.
impl PartialEq for Raster {
    fn eq(&self, other: &Self) -> bool {
        if self.width != other.width
            || self.height != other.height
            || self.mask != other.mask
            || self.geo != other.geo
            || self.bands.len() != other.bands.len()
        {
            return false;
        }
        self.bands.iter().zip(&other.bands).all(|(a, b)| {
            a.name == b.name
                && a.wavelength == b.wavelength
                && a.values
                    .iter()
                    .zip(&b.values)
                    .zip(&self.mask)
                    .all(|((x, y), &ok)| !ok || x.to_bits() == y.to_bits())
        })
    }
}
