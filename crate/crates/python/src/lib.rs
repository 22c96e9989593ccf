//! Python bindings: rasters, masking and compositing, indices, chip datasets,
//! model training and prediction, metrics and change products.

use std::str::FromStr;

use chrono::NaiveDate;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError};
use pyo3::prelude::*;

use lulc_core::change::{self, ClassMap, ExpansionCell};
use lulc_core::dataset::{self, ChipDataset, ClassScheme, LabeledPoint, SplitConfig, UnderfullPolicy};
use lulc_core::evaluate;
use lulc_core::indices::{self, IndexKind, IndexRecipe};
use lulc_core::models::{self, ModelKind, TrainedModel};
use lulc_core::preprocess::{self, QaBitSpec, TimeStack};
use lulc_core::raster::{self, Band, GeoRef, Window};
use lulc_core::train::{fit_model, ModelSpec};
use lulc_core::LulcError;

create_exception!(lulc, PipelineError, PyException);
create_exception!(lulc, ConfigError, PipelineError);

fn err(e: LulcError) -> PyErr {
    match e {
        LulcError::Config(m) => ConfigError::new_err(m),
        e @ LulcError::Io { .. } => PyOSError::new_err(e.to_string()),
        e => PipelineError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for lulc_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn scheme(names: &[String]) -> PyResult<ClassScheme> {
    let colors: Vec<[u8; 3]> = (0..names.len()).map(|i| change::year_color(i, names.len())).collect();
    ClassScheme::from_names(names, &colors).py()
}

/// A multi-band grid with a validity mask and georeference.
#[pyclass(name = "Raster", module = "lulc", from_py_object)]
#[derive(Clone)]
struct PyRaster {
    inner: raster::Raster,
}

#[pymethods]
impl PyRaster {
    #[new]
    #[pyo3(signature = (width, height, bands, mask=None, crs="EPSG:32637", origin=(0.0, 0.0), pixel_size=(30.0, -30.0)))]
    fn new(
        width: usize,
        height: usize,
        bands: Vec<(String, Vec<f64>)>,
        mask: Option<Vec<bool>>,
        crs: &str,
        origin: (f64, f64),
        pixel_size: (f64, f64),
    ) -> PyResult<Self> {
        let geo = GeoRef::new(crs, origin, pixel_size).py()?;
        let bands = bands.into_iter().map(|(n, v)| Band::new(n, v)).collect();
        let mask = mask.unwrap_or_else(|| vec![true; width * height]);
        Ok(PyRaster {
            inner: raster::Raster::new(width, height, bands, mask, geo).py()?,
        })
    }

    /// Reads a GeoTIFF.
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(PyRaster {
            inner: raster::read_geotiff(path).py()?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        raster::write_geotiff(&self.inner, path).py()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn band_names(&self) -> Vec<String> {
        self.inner.band_names().into_iter().map(String::from).collect()
    }

    #[getter]
    fn mask(&self) -> Vec<bool> {
        self.inner.mask().to_vec()
    }

    #[getter]
    fn crs(&self) -> String {
        self.inner.geo().crs.clone()
    }

    fn band(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.band(name).py()?.values.clone())
    }

    fn valid_count(&self) -> usize {
        self.inner.valid_count()
    }

    fn select(&self, names: Vec<String>) -> PyResult<Self> {
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        Ok(PyRaster {
            inner: self.inner.select_bands(&names).py()?,
        })
    }

    fn clip(&self, col: usize, row: usize, width: usize, height: usize) -> PyResult<Self> {
        Ok(PyRaster {
            inner: self.inner.clip(Window::new(col, row, width, height)).py()?,
        })
    }

    fn with_band(&self, name: String, values: Vec<f64>) -> PyResult<Self> {
        Ok(PyRaster {
            inner: self.inner.with_band(Band::new(name, values)).py()?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Raster({}x{}, bands={:?}, valid={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.band_names(),
            self.inner.valid_count()
        )
    }
}

/// Masks pixels whose QA word has any of `bits` set.
#[pyfunction]
#[pyo3(signature = (raster, qa_band, bits=vec![1, 3, 4]))]
fn mask_clouds(raster: &PyRaster, qa_band: &str, bits: Vec<u8>) -> PyResult<PyRaster> {
    let spec = QaBitSpec::new(bits).py()?;
    let qa = raster.inner.band(qa_band).py()?;
    Ok(PyRaster {
        inner: preprocess::apply_qa_mask(&raster.inner, qa, &spec).py()?,
    })
}

/// Per-pixel median over valid observations; dates are `YYYY-MM-DD`.
#[pyfunction]
fn median_composite(scenes: Vec<(String, PyRaster)>) -> PyResult<PyRaster> {
    let epochs = scenes
        .into_iter()
        .map(|(d, r)| {
            NaiveDate::parse_from_str(&d, "%Y-%m-%d")
                .map(|d| (d, r.inner))
                .map_err(|e| ConfigError::new_err(format!("bad date '{d}': {e}")))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let stack = TimeStack::new(epochs).py()?;
    Ok(PyRaster {
        inner: preprocess::median_composite(&stack).py()?,
    })
}

/// `(a - b) / (a + b)`; returns values and validity.
#[pyfunction]
fn normalized_difference(raster: &PyRaster, a: &str, b: &str) -> PyResult<(Vec<f64>, Vec<bool>)> {
    let layer = indices::normalized_difference(&raster.inner, &IndexRecipe::new("nd", a, b)).py()?;
    Ok((layer.band.values, layer.valid))
}

/// Named index (ndvi, ndwi, mndwi, ndbi) over logical band names.
#[pyfunction]
fn index(raster: &PyRaster, name: &str) -> PyResult<(Vec<f64>, Vec<bool>)> {
    let kind = IndexKind::from_str(name).py()?;
    let layer = indices::compute(&raster.inner, kind, &indices::BandMap::new()).py()?;
    Ok((layer.band.values, layer.valid))
}

/// Appends index bands, e.g. `["ndvi", "mndwi", "ndbi"]`.
#[pyfunction]
#[pyo3(signature = (raster, names=vec!["ndvi".to_string(), "mndwi".to_string(), "ndbi".to_string()]))]
fn append_indices(raster: &PyRaster, names: Vec<String>) -> PyResult<PyRaster> {
    let bands = indices::BandMap::new();
    let recipes = names
        .iter()
        .map(|n| Ok(IndexRecipe::for_kind(IndexKind::from_str(n)?, &bands)))
        .collect::<lulc_core::Result<Vec<_>>>()
        .py()?;
    Ok(PyRaster {
        inner: indices::append_feature_bands(&raster.inner, &recipes).py()?,
    })
}

/// Flattened `size x size x channels` chip centered on `(col, row)`.
#[pyfunction]
fn extract_chip(raster: &PyRaster, col: usize, row: usize, size: usize) -> PyResult<Vec<f64>> {
    Ok(dataset::extract_chip(&raster.inner, (col, row), size).py()?.data)
}

/// Labelled chips of one split.
#[pyclass(name = "Dataset", module = "lulc", from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: ChipDataset,
}

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn chip_size(&self) -> usize {
        self.inner.chip_size
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels
    }

    #[getter]
    fn labels(&self) -> PyResult<Vec<usize>> {
        self.inner.labels().py()
    }

    #[getter]
    fn centers(&self) -> Vec<(usize, usize)> {
        self.inner.chips.iter().map(|c| c.center).collect()
    }

    fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        self.inner.class_counts(n_classes)
    }

    fn chip(&self, i: usize) -> PyResult<Vec<f64>> {
        self.inner
            .chips
            .get(i)
            .map(|c| c.data.clone())
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(i))
    }
}

/// Stratified train/test chips from `(col, row, class_id)` labels.
#[pyfunction]
#[pyo3(signature = (raster, labels, class_names, chip_size=9, per_class_train=175, per_class_test=75, seed=0, upsample=true))]
#[allow(clippy::too_many_arguments)]
fn build_dataset(
    raster: &PyRaster,
    labels: Vec<(usize, usize, usize)>,
    class_names: Vec<String>,
    chip_size: usize,
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
    upsample: bool,
) -> PyResult<(PyDataset, PyDataset)> {
    let points: Vec<LabeledPoint> = labels
        .into_iter()
        .map(|(col, row, class_id)| LabeledPoint {
            col,
            row,
            class_id,
            year: 0,
            source: "python".into(),
        })
        .collect();
    let cfg = SplitConfig {
        per_class_train,
        per_class_test,
        chip_size,
        underfull: if upsample {
            UnderfullPolicy::Upsample
        } else {
            UnderfullPolicy::Warn
        },
        seed,
    };
    let split = dataset::build_labeled_set(&raster.inner, &points, &scheme(&class_names)?, &cfg).py()?;
    Ok((PyDataset { inner: split.train }, PyDataset { inner: split.test }))
}

/// A fitted classifier or clusterer.
#[pyclass(name = "Model", module = "lulc", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: TrainedModel,
    curve: Vec<(usize, f64, f64, f64, f64)>,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: models::load_model(path).py()?,
            curve: Vec::new(),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        models::save_model(&self.inner, path).py()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names.clone()
    }

    /// Per-epoch `(epoch, train_loss, train_acc, val_loss, val_acc)`; empty for
    /// forests, k-means and loaded models.
    #[getter]
    fn curve(&self) -> Vec<(usize, f64, f64, f64, f64)> {
        self.curve.clone()
    }

    fn predict(&self, py: Python<'_>, data: &PyDataset) -> PyResult<Vec<usize>> {
        let flat = flatten(&data.inner);
        py.detach(|| self.inner.predict(&flat)).py()
    }

    fn predict_proba(&self, py: Python<'_>, data: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
        let flat = flatten(&data.inner);
        py.detach(|| self.inner.predict_proba(&flat)).py()
    }

    /// Classifies every valid pixel of `raster`.
    fn classify(&self, py: Python<'_>, raster: &PyRaster, year: i32) -> PyResult<PyClassMap> {
        let names = if self.inner.class_names.is_empty() {
            (0..self.inner.n_outputs()).map(|i| format!("class{i}")).collect()
        } else {
            self.inner.class_names.clone()
        };
        let scheme = scheme(&names)?;
        let map = py
            .detach(|| change::classify_map(&raster.inner, &self.inner, year, &scheme))
            .py()?;
        Ok(PyClassMap { inner: map })
    }
}

fn flatten(ds: &ChipDataset) -> Vec<f64> {
    ds.chips.iter().flat_map(|c| c.data.iter().copied()).collect()
}

/// Fits `kind` (cnn, rf, ann or kmeans) with default hyperparameters, some of
/// which can be overridden.
#[pyfunction]
#[pyo3(signature = (kind, data, class_names, seed=0, max_epochs=None, patience=None, n_estimators=None, k=None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    kind: &str,
    data: &PyDataset,
    class_names: Vec<String>,
    seed: u64,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    n_estimators: Option<usize>,
    k: Option<usize>,
) -> PyResult<PyModel> {
    let mut spec = ModelSpec::default_for(ModelKind::from_str(kind).py()?);
    match &mut spec {
        ModelSpec::Mlp { train, .. } | ModelSpec::Cnn { train, .. } => {
            if let Some(e) = max_epochs {
                train.max_epochs = e;
            }
            if let Some(p) = patience {
                train.patience = p;
            }
        }
        ModelSpec::Forest(p) => {
            if let Some(n) = n_estimators {
                p.n_estimators = n;
            }
        }
        ModelSpec::KMeans(c) => {
            if let Some(k) = k {
                c.k = k;
            }
        }
    }
    let n_classes = class_names.len();
    let out = py
        .detach(|| fit_model(&spec, &data.inner, n_classes, &class_names, seed))
        .py()?;
    let curve = out
        .curve
        .map(|c| {
            c.epochs
                .iter()
                .map(|e| (e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy))
                .collect()
        })
        .unwrap_or_default();
    Ok(PyModel {
        inner: out.model,
        curve,
    })
}

/// Confusion counts (row = truth) plus overall, macro and per-class metrics.
#[pyfunction]
fn metrics(py: Python<'_>, truth: Vec<usize>, pred: Vec<usize>, n_classes: usize) -> PyResult<Py<PyAny>> {
    let cm = evaluate::confusion(&truth, &pred, n_classes).py()?;
    let r = evaluate::metrics(&cm).py()?;
    let d = pyo3::types::PyDict::new(py);
    let counts: Vec<Vec<u64>> = (0..n_classes).map(|t| cm.row(t).to_vec()).collect();
    d.set_item("confusion", counts)?;
    d.set_item("accuracy", r.overall_accuracy)?;
    d.set_item("precision", r.macro_precision)?;
    d.set_item("recall", r.macro_recall)?;
    d.set_item("f1", r.macro_f1)?;
    let per: Vec<(f64, f64, f64, f64)> = r
        .per_class
        .iter()
        .map(|m| (m.accuracy, m.precision, m.recall, m.f1))
        .collect();
    d.set_item("per_class", per)?;
    Ok(d.into_any().unbind())
}

/// Area under the ROC curve for binary scores.
#[pyfunction]
fn binary_auc(scores: Vec<f64>, positive: Vec<bool>) -> Option<f64> {
    evaluate::binary_auc(&scores, &positive)
}

/// One classified year.
#[pyclass(name = "ClassMap", module = "lulc", from_py_object)]
#[derive(Clone)]
struct PyClassMap {
    inner: ClassMap,
}

#[pymethods]
impl PyClassMap {
    #[new]
    fn new(
        year: i32,
        width: usize,
        height: usize,
        cells: Vec<Option<usize>>,
        class_names: Vec<String>,
    ) -> PyResult<Self> {
        let geo = GeoRef::new("EPSG:32637", (0.0, 0.0), (30.0, -30.0)).py()?;
        Ok(PyClassMap {
            inner: ClassMap::new(year, width, height, cells, geo, scheme(&class_names)?).py()?,
        })
    }

    #[getter]
    fn year(&self) -> i32 {
        self.inner.year
    }

    #[getter]
    fn cells(&self) -> Vec<Option<usize>> {
        self.inner.cells.clone()
    }

    fn class_counts(&self) -> Vec<u64> {
        self.inner.class_counts()
    }

    fn write(&self, path: &str) -> PyResult<()> {
        self.inner.write_geotiff(path).py()
    }
}

/// Expansion, proportions and transitions for chronologically ordered maps.
/// Expansion cells are the first urban year, 0 for never-urban and None for
/// masked.
#[pyfunction]
#[pyo3(signature = (maps, urban_class=0))]
fn change_product(py: Python<'_>, maps: Vec<PyClassMap>, urban_class: usize) -> PyResult<Py<PyAny>> {
    let maps: Vec<ClassMap> = maps.into_iter().map(|m| m.inner).collect();
    let p = change::change_product(&maps, urban_class).py()?;
    let expansion: Vec<Option<i32>> = p
        .expansion
        .cells
        .iter()
        .map(|c| match c {
            ExpansionCell::Masked => None,
            ExpansionCell::Never => Some(0),
            ExpansionCell::Since(y) => Some(*y),
        })
        .collect();
    let d = pyo3::types::PyDict::new(py);
    d.set_item("expansion", expansion)?;
    d.set_item("flicker", p.expansion.flicker)?;
    let props: Vec<(i32, Vec<f64>)> = p.proportions.into_iter().map(|y| (y.year, y.shares)).collect();
    d.set_item("proportions", props)?;
    d.set_item("transitions", p.transitions)?;
    Ok(d.into_any().unbind())
}

#[pymodule]
pub fn lulc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PipelineError", m.py().get_type::<PipelineError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add_class::<PyRaster>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyClassMap>()?;
    m.add_function(wrap_pyfunction!(mask_clouds, m)?)?;
    m.add_function(wrap_pyfunction!(median_composite, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_difference, m)?)?;
    m.add_function(wrap_pyfunction!(index, m)?)?;
    m.add_function(wrap_pyfunction!(append_indices, m)?)?;
    m.add_function(wrap_pyfunction!(extract_chip, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(binary_auc, m)?)?;
    m.add_function(wrap_pyfunction!(change_product, m)?)?;
    Ok(())
}
