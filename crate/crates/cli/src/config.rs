//! Pipeline configuration file (TOML). Relative paths resolve against the
//! directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use lulc_core::dataset::{SplitConfig, UnderfullPolicy, DEFAULT_CHIP_SIZE, SWEEP_SIZES};
use lulc_core::indices::{BandMap, IndexKind, IndexRecipe};
use lulc_core::models::{CnnSpec, ForestGrid, ForestParams, KMeansConfig, MaxFeatures, ModelKind, TrainConfig};
use lulc_core::preprocess::QaBitSpec;
use lulc_core::train::ModelSpec;
use lulc_core::{LulcError, Result};

pub const CONFIG_VERSION: u32 = 1;

/// The seven reflectance bands in pipeline order, by logical name.
pub const REFLECTANCE_BANDS: [&str; 7] = ["coastal", "blue", "green", "red", "nir", "swir1", "swir2"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub bands: BTreeMap<String, String>,
    #[serde(default)]
    pub composite: CompositeSection,
    #[serde(default)]
    pub indices: IndicesSection,
    #[serde(default)]
    pub classes: ClassesSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub path: PathBuf,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeSection {
    #[serde(default = "default_qa_bits")]
    pub qa_bits: Vec<u8>,
    #[serde(default = "default_window")]
    pub window_months: u32,
    #[serde(default)]
    pub scenes: Vec<SceneEntry>,
    /// Multiplier and offset converting stored values to reflectance.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

fn default_qa_bits() -> Vec<u8> {
    QaBitSpec::DEFAULT_BITS.to_vec()
}

fn default_window() -> u32 {
    12
}

fn one() -> f64 {
    1.0
}

impl Default for CompositeSection {
    fn default() -> Self {
        CompositeSection {
            qa_bits: default_qa_bits(),
            window_months: default_window(),
            scenes: Vec::new(),
            scale: 1.0,
            offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicesSection {
    #[serde(default = "default_indices")]
    pub names: Vec<String>,
}

fn default_indices() -> Vec<String> {
    IndexKind::DEFAULT_FEATURES
        .iter()
        .map(|k| k.name().to_ascii_lowercase())
        .collect()
}

impl Default for IndicesSection {
    fn default() -> Self {
        IndicesSection {
            names: default_indices(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub name: String,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassesSection {
    #[serde(default)]
    pub scheme: Vec<ClassEntry>,
    #[serde(default)]
    pub urban_class: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub labels: Option<PathBuf>,
    /// Composite year the labels were drawn on.
    pub label_year: Option<i32>,
    /// Explicit training raster; defaults to that year's composite.
    pub raster: Option<PathBuf>,
    #[serde(default = "default_chip")]
    pub chip_size: usize,
    #[serde(default = "default_train_n")]
    pub per_class_train: usize,
    #[serde(default = "default_test_n")]
    pub per_class_test: usize,
    #[serde(default = "default_underfull")]
    pub underfull: String,
}

fn default_chip() -> usize {
    DEFAULT_CHIP_SIZE
}

fn default_train_n() -> usize {
    175
}

fn default_test_n() -> usize {
    75
}

fn default_underfull() -> String {
    "upsample".into()
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            labels: None,
            label_year: None,
            raster: None,
            chip_size: default_chip(),
            per_class_train: default_train_n(),
            per_class_test: default_test_n(),
            underfull: default_underfull(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    /// CNN only.
    pub widths: Option<Vec<usize>>,
    pub dropout: Option<Vec<f64>>,
    /// MLP only.
    pub hidden: Option<usize>,
}

impl NetSection {
    fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            patience: self.patience.unwrap_or(d.patience),
            ..d
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestSection {
    pub n_estimators: Option<usize>,
    /// 0 means unlimited.
    pub max_depth: Option<usize>,
    pub max_features: Option<String>,
    pub min_samples_leaf: Option<usize>,
    pub min_samples_split: Option<usize>,
    #[serde(default)]
    pub grid_search: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansSection {
    pub k: Option<usize>,
    pub max_iters: Option<usize>,
    /// Pixels sampled to fit the centroids; 0 uses every valid pixel.
    #[serde(default)]
    pub sample: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    /// Cross-validation folds; 0 disables cross-validation.
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub cnn: Option<NetSection>,
    pub ann: Option<NetSection>,
    pub rf: Option<ForestSection>,
    pub kmeans: Option<KMeansSection>,
}

fn default_models() -> Vec<String> {
    vec!["cnn".into()]
}

fn default_folds() -> usize {
    10
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            models: default_models(),
            folds: default_folds(),
            cnn: None,
            ann: None,
            rf: None,
            kmeans: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub model: Option<PathBuf>,
    /// Explicit `(year, raster)` inputs; defaults to the composites on disk.
    #[serde(default)]
    pub rasters: Vec<YearRaster>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearRaster {
    pub year: i32,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_sweep_model")]
    pub model: String,
}

fn default_sizes() -> Vec<usize> {
    SWEEP_SIZES.to_vec()
}

fn default_sweep_model() -> String {
    "cnn".into()
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sizes: default_sizes(),
            model: default_sweep_model(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_years")]
    pub years: Vec<i32>,
    #[serde(default = "default_scenes")]
    pub scenes_per_year: usize,
    /// Urban pixels at the first year, and pixels added per year.
    #[serde(default = "default_urban_start")]
    pub urban_start: usize,
    #[serde(default = "default_growth")]
    pub urban_growth: usize,
    #[serde(default = "default_per_class")]
    pub labels_per_class: usize,
    #[serde(default = "default_rare")]
    pub rare_class_labels: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_clouds")]
    pub clouds_per_scene: usize,
}

fn default_side() -> usize {
    64
}

fn default_years() -> Vec<i32> {
    vec![2021, 2022, 2023]
}

fn default_scenes() -> usize {
    4
}

fn default_urban_start() -> usize {
    300
}

fn default_growth() -> usize {
    120
}

fn default_per_class() -> usize {
    250
}

fn default_rare() -> usize {
    91
}

fn default_noise() -> f64 {
    0.01
}

fn default_clouds() -> usize {
    3
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            width: default_side(),
            height: default_side(),
            years: default_years(),
            scenes_per_year: default_scenes(),
            urban_start: default_urban_start(),
            urban_growth: default_growth(),
            labels_per_class: default_per_class(),
            rare_class_labels: default_rare(),
            noise: default_noise(),
            clouds_per_scene: default_clouds(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LulcError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| LulcError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| LulcError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(LulcError::Config(format!(
                "version: config schema {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn band_map(&self) -> BandMap {
        self.bands.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    /// File band names of the seven reflectance bands, in pipeline order.
    pub fn reflectance_names(&self) -> Vec<String> {
        let map = self.band_map();
        REFLECTANCE_BANDS.iter().map(|b| map.resolve(b).to_string()).collect()
    }

    pub fn qa_band_name(&self) -> Result<String> {
        self.bands
            .get("qa")
            .cloned()
            .ok_or_else(|| LulcError::Config("bands.qa: QA band name missing from the band mapping".into()))
    }

    pub fn qa_spec(&self) -> Result<QaBitSpec> {
        QaBitSpec::new(self.composite.qa_bits.iter().copied())
            .map_err(|e| LulcError::Config(format!("composite.qa_bits: {e}")))
    }

    /// Index recipes over the pipeline's logical band names.
    pub fn index_recipes(&self) -> Result<Vec<IndexRecipe>> {
        let logical = BandMap::new();
        self.indices
            .names
            .iter()
            .map(|n| {
                n.parse::<IndexKind>()
                    .map(|k| IndexRecipe::for_kind(k, &logical))
                    .map_err(|e| LulcError::Config(format!("indices.names: {e}")))
            })
            .collect()
    }

    pub fn scheme(&self) -> Result<lulc_core::dataset::ClassScheme> {
        if self.classes.scheme.is_empty() {
            return Ok(lulc_core::dataset::ClassScheme::default());
        }
        let names: Vec<&str> = self.classes.scheme.iter().map(|c| c.name.as_str()).collect();
        let colors: Vec<[u8; 3]> = self.classes.scheme.iter().map(|c| c.color).collect();
        lulc_core::dataset::ClassScheme::from_names(&names, &colors)
            .map_err(|e| LulcError::Config(format!("classes.scheme: {e}")))
    }

    pub fn split_config(&self) -> Result<SplitConfig> {
        let underfull = match self.dataset.underfull.as_str() {
            "upsample" => UnderfullPolicy::Upsample,
            "warn" => UnderfullPolicy::Warn,
            other => {
                return Err(LulcError::Config(format!(
                    "dataset.underfull: expected 'upsample' or 'warn', got '{other}'"
                )))
            }
        };
        let d = &self.dataset;
        if d.chip_size == 0 || d.chip_size % 2 == 0 {
            return Err(LulcError::Config(format!(
                "dataset.chip_size: must be odd, got {}",
                d.chip_size
            )));
        }
        Ok(SplitConfig {
            per_class_train: d.per_class_train,
            per_class_test: d.per_class_test,
            chip_size: d.chip_size,
            underfull,
            seed: lulc_core::seed::derive_seed(self.seed, "split"),
        })
    }

    /// Requested model kinds; `all` expands to the three supervised models.
    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        let mut kinds = Vec::new();
        for m in &self.train.models {
            if m.eq_ignore_ascii_case("all") {
                kinds.extend(ModelKind::SUPERVISED);
            } else {
                kinds.push(m.parse().map_err(|e| LulcError::Config(format!("train.models: {e}")))?);
            }
        }
        kinds.dedup();
        if kinds.is_empty() {
            return Err(LulcError::Config("train.models: no model requested".into()));
        }
        Ok(kinds)
    }

    pub fn model_spec(&self, kind: ModelKind) -> Result<ModelSpec> {
        let spec = match kind {
            ModelKind::Cnn => {
                let s = self.train.cnn.clone().unwrap_or_else(empty_net);
                let d = CnnSpec::default();
                ModelSpec::Cnn {
                    spec: CnnSpec {
                        widths: s.widths.clone().unwrap_or(d.widths),
                        dropout: s.dropout.clone().unwrap_or(d.dropout),
                    },
                    train: s.train_config(),
                }
            }
            ModelKind::Mlp => {
                let s = self.train.ann.clone().unwrap_or_else(empty_net);
                ModelSpec::Mlp {
                    hidden: s.hidden.unwrap_or(lulc_core::models::MlpModel::DEFAULT_HIDDEN),
                    train: s.train_config(),
                }
            }
            ModelKind::Forest => ModelSpec::Forest(self.forest_params()?),
            ModelKind::KMeans => {
                let d = KMeansConfig::default();
                let s = self.train.kmeans.as_ref();
                ModelSpec::KMeans(KMeansConfig {
                    k: s.and_then(|s| s.k).unwrap_or(d.k),
                    max_iters: s.and_then(|s| s.max_iters).unwrap_or(d.max_iters),
                    ..d
                })
            }
        };
        if let ModelSpec::Cnn { train, .. } | ModelSpec::Mlp { train, .. } = &spec {
            train
                .validate()
                .map_err(|e| LulcError::Config(format!("train.{}: {e}", kind.name())))?;
        }
        Ok(spec)
    }

    pub fn forest_params(&self) -> Result<ForestParams> {
        let d = ForestParams::default();
        let Some(s) = &self.train.rf else {
            return Ok(d);
        };
        Ok(ForestParams {
            n_estimators: s.n_estimators.unwrap_or(d.n_estimators),
            max_depth: match s.max_depth {
                Some(0) => None,
                Some(n) => Some(n),
                None => d.max_depth,
            },
            max_features: match &s.max_features {
                Some(m) => m
                    .parse::<MaxFeatures>()
                    .map_err(|e| LulcError::Config(format!("train.rf.max_features: {e}")))?,
                None => d.max_features,
            },
            min_samples_leaf: s.min_samples_leaf.unwrap_or(d.min_samples_leaf),
            min_samples_split: s.min_samples_split.unwrap_or(d.min_samples_split),
            bootstrap: true,
        })
    }

    pub fn forest_grid(&self) -> Option<ForestGrid> {
        self.train
            .rf
            .as_ref()
            .filter(|s| s.grid_search)
            .map(|_| ForestGrid::default())
    }

    /// Checks everything a command needs before any computation starts.
    pub fn validate_common(&self) -> Result<()> {
        self.qa_spec()?;
        self.index_recipes()?;
        self.scheme()?;
        self.split_config()?;
        if self.classes.urban_class >= self.scheme()?.len() {
            return Err(LulcError::Config(format!(
                "classes.urban_class: {} is not a class id",
                self.classes.urban_class
            )));
        }
        if self.composite.window_months == 0 {
            return Err(LulcError::Config("composite.window_months: must be at least 1".into()));
        }
        Ok(())
    }
}

fn empty_net() -> NetSection {
    NetSection {
        learning_rate: None,
        max_epochs: None,
        batch_size: None,
        patience: None,
        widths: None,
        dropout: None,
        hidden: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_defaults() {
        let cfg = PipelineConfig::parse("version = 1\nseed = 7\n").unwrap();
        assert_eq!(cfg.composite.qa_bits, vec![1, 3, 4]);
        assert_eq!(cfg.sweep.sizes, vec![490, 700, 1050, 1400, 1750]);
        assert_eq!(cfg.index_recipes().unwrap().len(), 3);
        assert!(cfg.qa_band_name().is_err());
    }

    #[test]
    fn seed_and_version_required() {
        assert!(PipelineConfig::parse("version = 1\n").is_err());
        assert!(PipelineConfig::parse("version = 2\nseed = 1\n").is_err());
        assert!(PipelineConfig::parse("version = 1\nseed = 1\nbogus = 3\n").is_err());
    }
}
