//! The pipeline stages behind each subcommand. Every command reads a
//! [`PipelineConfig`], validates it fully, then writes under `output_dir`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Datelike;
use rand::seq::SliceRandom;

use lulc_core::change::{
    change_product, classify_map, render_class_map, render_expansion, write_proportions_csv, write_transitions_csv,
    ChangeProduct, ClassMap,
};
use lulc_core::dataset::{
    build_labeled_set, iter_chips, read_labels, ChipDataset, ClassScheme, LabeledPoint, LabeledSplit, SplitTag,
};
use lulc_core::evaluate::{
    confusion, kfold_cv_with, metrics, render_confusion_png, render_learning_curve_png, roc_auc, sample_size_sweep,
    write_comparison_csv, write_cv_table, write_learning_curve_csv, write_roc_csv, write_sweep_csv, MetricReport,
};
use lulc_core::indices::append_feature_bands;
use lulc_core::models::{forest_grid_search, load_model, save_model, LearningCurve, ModelKind, Samples, TrainedModel};
use lulc_core::preprocess::{apply_qa_mask, group_by_window, median_composite};
use lulc_core::raster::{read_geotiff, write_geotiff, Band, Raster};
use lulc_core::seed::{derive_seed, rng};
use lulc_core::train::{fit_model, ModelSpec};
use lulc_core::{LulcError, Result};

use crate::config::{PipelineConfig, REFLECTANCE_BANDS};
use crate::synth;

pub const COMPOSITE_DIR: &str = "composites";
pub const COMPOSITE_LOG: &str = "composite.log.csv";
pub const TRAIN_DIR: &str = "train";
pub const CLASSIFY_DIR: &str = "classify";
pub const CLASSIFY_INDEX: &str = "maps.csv";
pub const CHANGE_DIR: &str = "change";
pub const SWEEP_DIR: &str = "sweep";

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| LulcError::io(p, e))
}

fn write_text(p: &Path, s: &str) -> Result<()> {
    std::fs::write(p, s).map_err(|e| LulcError::io(p, e))
}

fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| LulcError::io(p, e))
}

fn require_file(field: &str, p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(LulcError::Config(format!("{field}: file not found: {}", p.display())))
    }
}

/// One composite on disk; `key` is `YYYY` for yearly windows, else `YYYY-MM`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeEntry {
    pub key: String,
    pub year: i32,
    pub scenes: usize,
    pub valid_pixels: usize,
    pub total_pixels: usize,
    pub path: PathBuf,
}

impl CompositeEntry {
    pub fn valid_percent(&self) -> f64 {
        100.0 * self.valid_pixels as f64 / self.total_pixels.max(1) as f64
    }
}

fn composite_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.out_dir().join(COMPOSITE_DIR)
}

fn composite_path(cfg: &PipelineConfig, key: &str) -> PathBuf {
    composite_dir(cfg).join(format!("composite_{key}.tif"))
}

/// Reads the scene stack, masks with QA, composites per window.
pub fn cmd_composite(cfg: &PipelineConfig) -> Result<Vec<CompositeEntry>> {
    cfg.validate_common()?;
    let qa_name = cfg.qa_band_name()?;
    let spec = cfg.qa_spec()?;
    if cfg.composite.scenes.is_empty() {
        return Err(LulcError::Config("composite.scenes: no scenes listed".into()));
    }
    for (i, s) in cfg.composite.scenes.iter().enumerate() {
        require_file(&format!("composite.scenes[{i}].path"), &cfg.resolve(&s.path))?;
    }
    let reflectance = cfg.reflectance_names();
    let (scale, offset) = (cfg.composite.scale, cfg.composite.offset);

    let t0 = Instant::now();
    let mut scenes = Vec::with_capacity(cfg.composite.scenes.len());
    for s in &cfg.composite.scenes {
        let path = cfg.resolve(&s.path);
        let raw = read_geotiff(&path)?;
        let qa = raw.band(&qa_name)?.clone();
        let bands = reflectance
            .iter()
            .zip(REFLECTANCE_BANDS)
            .map(|(file_name, logical)| {
                let src = raw.band(file_name)?;
                Ok(Band {
                    name: logical.to_string(),
                    wavelength: src.wavelength,
                    values: src.values.iter().map(|v| v * scale + offset).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let r = Raster::new(raw.width(), raw.height(), bands, raw.mask().to_vec(), raw.geo().clone())?;
        scenes.push((s.date, apply_qa_mask(&r, &qa, &spec)?));
    }
    let months = cfg.composite.window_months;
    let windows = group_by_window(scenes, months)?;

    let dir = composite_dir(cfg);
    mkdir(&dir)?;
    let mut log = String::from("window,scenes,valid_pixels,total_pixels,valid_percent\n");
    let mut out = Vec::with_capacity(windows.len());
    for (start, stack) in windows {
        let key = if months == 12 {
            format!("{}", start.year())
        } else {
            start.format("%Y-%m").to_string()
        };
        let composite = median_composite(&stack)?;
        let entry = CompositeEntry {
            path: composite_path(cfg, &key),
            year: start.year(),
            scenes: stack.len(),
            valid_pixels: composite.valid_count(),
            total_pixels: composite.pixel_count(),
            key,
        };
        write_geotiff(&composite, &entry.path)?;
        tracing::info!(
            stage = "composite",
            window = %entry.key,
            scenes = entry.scenes,
            valid_percent = format!("{:.2}", entry.valid_percent()),
            "composite written"
        );
        log.push_str(&format!(
            "{},{},{},{},{:.4}\n",
            entry.key,
            entry.scenes,
            entry.valid_pixels,
            entry.total_pixels,
            entry.valid_percent()
        ));
        out.push(entry);
    }
    write_text(&dir.join(COMPOSITE_LOG), &log)?;
    tracing::info!(
        stage = "composite",
        windows = out.len(),
        elapsed_ms = t0.elapsed().as_millis() as u64,
        "done"
    );
    Ok(out)
}

/// Composites recorded by the last `composite` run, in time order.
pub fn list_composites(cfg: &PipelineConfig) -> Result<Vec<CompositeEntry>> {
    let log = composite_dir(cfg).join(COMPOSITE_LOG);
    let text = read_text(&log)?;
    let bad = |line: &str| LulcError::Format(format!("{}: malformed line '{line}'", log.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(line));
            Ok(CompositeEntry {
                key: f[0].to_string(),
                year: f[0].get(..4).and_then(|y| y.parse().ok()).ok_or_else(|| bad(line))?,
                scenes: num(f[1])?,
                valid_pixels: num(f[2])?,
                total_pixels: num(f[3])?,
                path: composite_path(cfg, f[0]),
            })
        })
        .collect()
}

/// A composite with the configured index bands appended.
pub fn load_features(cfg: &PipelineConfig, path: &Path) -> Result<Raster> {
    let raster = read_geotiff(path)?;
    append_feature_bands(&raster, &cfg.index_recipes()?)
}

fn label_raster_path(cfg: &PipelineConfig) -> Result<PathBuf> {
    if let Some(p) = &cfg.dataset.raster {
        let p = cfg.resolve(p);
        require_file("dataset.raster", &p)?;
        return Ok(p);
    }
    let year = cfg
        .dataset
        .label_year
        .ok_or_else(|| LulcError::Config("dataset.label_year: required when dataset.raster is not set".into()))?;
    let p = composite_path(cfg, &year.to_string());
    if !p.is_file() {
        return Err(LulcError::io(
            &p,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "composite for the label year not found; run composite first",
            ),
        ));
    }
    Ok(p)
}

fn labels_path(cfg: &PipelineConfig) -> Result<PathBuf> {
    let p = cfg
        .dataset
        .labels
        .as_ref()
        .map(|p| cfg.resolve(p))
        .ok_or_else(|| LulcError::Config("dataset.labels: no label file configured".into()))?;
    require_file("dataset.labels", &p)?;
    Ok(p)
}

/// The label-year feature raster with its labels.
pub fn load_labeled(cfg: &PipelineConfig, scheme: &ClassScheme) -> Result<(Raster, Vec<LabeledPoint>)> {
    let labels = labels_path(cfg)?;
    let raster = load_features(cfg, &label_raster_path(cfg)?)?;
    let points = read_labels(&labels, raster.geo(), (raster.width(), raster.height()), scheme)?;
    tracing::info!(stage = "dataset", labels = points.len(), "labels read");
    Ok((raster, points))
}

fn class_names(scheme: &ClassScheme) -> Vec<String> {
    scheme.classes().iter().map(|c| c.name.clone()).collect()
}

/// Held-out evaluation and artifacts of one supervised model.
#[derive(Debug, Clone)]
pub struct ModelOutcome {
    pub kind: ModelKind,
    pub report: MetricReport,
    pub fold_accuracy: Option<Vec<f64>>,
    pub model: TrainedModel,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub outcomes: Vec<ModelOutcome>,
    pub split: Option<LabeledSplit>,
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    cfg.validate_common()?;
    let kinds = cfg.model_kinds()?;
    let specs = kinds.iter().map(|&k| cfg.model_spec(k)).collect::<Result<Vec<_>>>()?;
    let scheme = cfg.scheme()?;
    let split_cfg = cfg.split_config()?;
    let (raster, points) = load_labeled(cfg, &scheme)?;
    let train_dir = cfg.out_dir().join(TRAIN_DIR);
    mkdir(&train_dir)?;

    let supervised = kinds.iter().any(|k| *k != ModelKind::KMeans);
    let split = if supervised {
        let s = build_labeled_set(&raster, &points, &scheme, &split_cfg)?;
        for u in &s.underfull {
            tracing::info!(
                stage = "dataset",
                class = u.class_id,
                available = u.available,
                train = u.train,
                test = u.test,
                upsampled_to = u.upsampled_to,
                "underfull class"
            );
        }
        tracing::info!(
            stage = "dataset",
            train = s.train.len(),
            test = s.test.len(),
            "split built"
        );
        Some(s)
    } else {
        None
    };

    let mut outcomes = Vec::new();
    for spec in &specs {
        let dir = train_dir.join(spec.kind().name());
        mkdir(&dir)?;
        let t0 = Instant::now();
        match (spec, &split) {
            (ModelSpec::KMeans(_), _) => run_kmeans(cfg, spec, &raster, &dir)?,
            (_, Some(split)) => outcomes.push(run_supervised(cfg, spec, split, &scheme, &dir)?),
            (_, None) => unreachable!("split exists whenever a supervised model is requested"),
        }
        tracing::info!(
            stage = "train",
            model = spec.kind().name(),
            elapsed_ms = t0.elapsed().as_millis() as u64,
            "model done"
        );
    }

    if !outcomes.is_empty() {
        let rows: Vec<(&str, &MetricReport)> = outcomes.iter().map(|o| (o.kind.label(), &o.report)).collect();
        write_comparison_csv(train_dir.join("comparison.csv"), &rows)?;
        let cols: Vec<(&str, &[f64])> = outcomes
            .iter()
            .filter_map(|o| o.fold_accuracy.as_deref().map(|f| (o.kind.label(), f)))
            .collect();
        if !cols.is_empty() {
            write_cv_table(train_dir.join("cv_table.csv"), &cols)?;
        }
    }
    Ok(TrainSummary { outcomes, split })
}

fn run_supervised(
    cfg: &PipelineConfig,
    spec: &ModelSpec,
    split: &LabeledSplit,
    scheme: &ClassScheme,
    dir: &Path,
) -> Result<ModelOutcome> {
    let kind = spec.kind();
    let names = class_names(scheme);
    let model_seed = derive_seed(cfg.seed, &format!("train/{}", kind.name()));
    let mut spec = spec.clone();

    if let (ModelSpec::Forest(_), Some(grid)) = (&spec, cfg.forest_grid()) {
        let s = Samples::from_chips(&split.train)?;
        let folds = if cfg.train.folds >= 2 { cfg.train.folds } else { 5 };
        let result = forest_grid_search(&s.data, s.dim, &s.labels, &grid, folds, derive_seed(model_seed, "grid"))?;
        let mut csv =
            String::from("max_depth,max_features,min_samples_leaf,min_samples_split,n_estimators,mean_accuracy\n");
        for row in &result.table {
            let p = &row.params;
            csv.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                p.max_depth.map_or("none".to_string(), |d| d.to_string()),
                p.max_features,
                p.min_samples_leaf,
                p.min_samples_split,
                p.n_estimators,
                row.mean_accuracy
            ));
        }
        write_text(&dir.join("grid.csv"), &csv)?;
        tracing::info!(
            stage = "train",
            model = "rf",
            best_accuracy = result.best_mean_accuracy,
            "grid search done"
        );
        spec = ModelSpec::Forest(result.best);
    }

    let (model, curve, fold_accuracy) = if cfg.train.folds >= 2 {
        let samples = Samples::from_chips(&split.train)?;
        let mut curves: Vec<Option<LearningCurve>> = Vec::new();
        let cv = kfold_cv_with(&samples, cfg.train.folds, derive_seed(model_seed, "folds"), |idx, f| {
            let sub = split.train.subset(idx);
            let out = fit_model(
                &spec,
                &sub,
                scheme.len(),
                &names,
                derive_seed(model_seed, &format!("cv/fold/{f}")),
            )?;
            curves.push(out.curve);
            Ok(out.model)
        })?;
        write_cv_table(dir.join("cv.csv"), &[(kind.label(), &cv.fold_accuracy)])?;
        tracing::info!(
            stage = "train",
            model = kind.name(),
            mean = cv.mean,
            std = cv.std,
            "cross-validation"
        );
        let curve = curves.swap_remove(cv.best_fold);
        (cv.best_model, curve, Some(cv.fold_accuracy))
    } else {
        let out = fit_model(&spec, &split.train, scheme.len(), &names, model_seed)?;
        (out.model, out.curve, None)
    };

    let test = Samples::from_chips(&split.test)?;
    let pred = model.predict(&test.data)?;
    let cm = confusion(&test.labels, &pred, scheme.len())?;
    let report = metrics(&cm)?;
    let roc = roc_auc(&test.labels, &model.predict_proba(&test.data)?, scheme.len())?;
    tracing::info!(
        stage = "evaluate",
        model = kind.name(),
        accuracy = report.overall_accuracy,
        macro_f1 = report.macro_f1,
        macro_auc = roc.macro_auc,
        "held-out test"
    );

    save_model(&model, dir.join("model.lkm1"))?;
    render_confusion_png(dir.join("confusion.png"), &cm)?;
    write_confusion_csv(&dir.join("confusion.csv"), &cm, &names)?;
    write_roc_csv(dir.join("roc.csv"), &roc, &names)?;
    write_comparison_csv(dir.join("metrics.csv"), &[(kind.label(), &report)])?;
    if let Some(curve) = &curve {
        write_learning_curve_csv(dir.join("curve.csv"), curve)?;
        render_learning_curve_png(dir.join("curve.png"), curve)?;
    }
    Ok(ModelOutcome {
        kind,
        report,
        fold_accuracy,
        model,
        dir: dir.to_path_buf(),
    })
}

fn write_confusion_csv(path: &Path, cm: &lulc_core::evaluate::ConfusionMatrix, names: &[String]) -> Result<()> {
    let mut s = String::from("truth\\predicted");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for (t, n) in names.iter().enumerate() {
        s.push_str(n);
        for v in cm.row(t) {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    write_text(path, &s)
}

const CLUSTER_COLORS: [[u8; 3]; 12] = [
    [228, 26, 28],
    [55, 126, 184],
    [77, 175, 74],
    [152, 78, 163],
    [255, 127, 0],
    [255, 255, 51],
    [166, 86, 40],
    [247, 129, 191],
    [153, 153, 153],
    [102, 194, 165],
    [141, 160, 203],
    [231, 138, 195],
];

fn run_kmeans(cfg: &PipelineConfig, spec: &ModelSpec, raster: &Raster, dir: &Path) -> Result<()> {
    let ModelSpec::KMeans(kcfg) = spec else {
        unreachable!("called with a k-means spec")
    };
    let mut chips: Vec<_> = iter_chips(raster, 1)?
        .filter(|c| raster.is_valid(c.center.0, c.center.1))
        .collect();
    let sample = cfg.train.kmeans.as_ref().map_or(0, |k| k.sample);
    if sample > 0 && sample < chips.len() {
        chips.shuffle(&mut rng(cfg.seed, "kmeans/sample"));
        chips.truncate(sample);
    }
    let ds = ChipDataset::new(chips, 1, raster.band_count(), SplitTag::Unlabeled)?;
    let names: Vec<String> = (0..kcfg.k).map(|i| format!("cluster {i}")).collect();
    let colors: Vec<[u8; 3]> = (0..kcfg.k).map(|i| CLUSTER_COLORS[i % CLUSTER_COLORS.len()]).collect();
    let scheme = ClassScheme::from_names(&names, &colors)?;
    let fit = fit_model(spec, &ds, kcfg.k, &names, derive_seed(cfg.seed, "train/kmeans"))?;
    let year = cfg.dataset.label_year.unwrap_or_default();
    let map = classify_map(raster, &fit.model, year, &scheme)?;
    save_model(&fit.model, dir.join("model.lkm1"))?;
    map.write_geotiff(dir.join("clusters.tif"))?;
    render_class_map(dir.join("clusters.png"), &map, &colors)?;
    tracing::info!(
        stage = "train",
        model = "kmeans",
        k = kcfg.k,
        pixels = ds.len(),
        "clusters written"
    );
    Ok(())
}

fn default_model_path(cfg: &PipelineConfig) -> Result<PathBuf> {
    if let Some(p) = &cfg.classify.model {
        return Ok(cfg.resolve(p));
    }
    let kinds = cfg.model_kinds()?;
    Ok(cfg.out_dir().join(TRAIN_DIR).join(kinds[0].name()).join("model.lkm1"))
}

/// Classifies every composite (or the configured rasters) with one model.
pub fn cmd_classify(cfg: &PipelineConfig, model_path: Option<&Path>) -> Result<Vec<ClassMap>> {
    cfg.validate_common()?;
    let scheme = cfg.scheme()?;
    let model_path = match model_path {
        Some(p) => p.to_path_buf(),
        None => default_model_path(cfg)?,
    };
    let inputs: Vec<(String, i32, PathBuf)> = if cfg.classify.rasters.is_empty() {
        list_composites(cfg)?
            .into_iter()
            .map(|c| (c.key, c.year, c.path))
            .collect()
    } else {
        cfg.classify
            .rasters
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let p = cfg.resolve(&r.path);
                require_file(&format!("classify.rasters[{i}].path"), &p)?;
                Ok((r.year.to_string(), r.year, p))
            })
            .collect::<Result<_>>()?
    };
    let model = load_model(&model_path)?;
    tracing::info!(stage = "classify", model = %model.kind(), path = %model_path.display(), "model loaded");

    let dir = cfg.out_dir().join(CLASSIFY_DIR);
    mkdir(&dir)?;
    let palette = scheme.palette();
    let mut index = String::from("year,key,path\n");
    let mut maps = Vec::with_capacity(inputs.len());
    for (key, year, path) in inputs {
        let t0 = Instant::now();
        let raster = load_features(cfg, &path)?;
        let map = classify_map(&raster, &model, year, &scheme)?;
        let name = format!("class_{key}.tif");
        map.write_geotiff(dir.join(&name))?;
        render_class_map(dir.join(format!("class_{key}.png")), &map, &palette)?;
        index.push_str(&format!("{year},{key},{name}\n"));
        tracing::info!(
            stage = "classify",
            window = %key,
            classified = map.classified_count(),
            elapsed_ms = t0.elapsed().as_millis() as u64,
            "map written"
        );
        maps.push(map);
    }
    write_text(&dir.join(CLASSIFY_INDEX), &index)?;
    Ok(maps)
}

/// Class maps recorded by the last `classify` run.
pub fn load_class_maps(cfg: &PipelineConfig, scheme: &ClassScheme) -> Result<Vec<ClassMap>> {
    let dir = cfg.out_dir().join(CLASSIFY_DIR);
    let index = dir.join(CLASSIFY_INDEX);
    let text = read_text(&index)?;
    let mut maps = text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || LulcError::Format(format!("{}: malformed line '{line}'", index.display()));
            if f.len() != 3 {
                return Err(bad());
            }
            let year: i32 = f[0].parse().map_err(|_| bad())?;
            ClassMap::from_raster(&read_geotiff(dir.join(f[2]))?, year, scheme.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    maps.sort_by_key(|m| m.year);
    Ok(maps)
}

pub fn cmd_change(cfg: &PipelineConfig) -> Result<ChangeProduct> {
    cfg.validate_common()?;
    let scheme = cfg.scheme()?;
    let maps = load_class_maps(cfg, &scheme)?;
    let product = change_product(&maps, cfg.classes.urban_class)?;
    let dir = cfg.out_dir().join(CHANGE_DIR);
    mkdir(&dir)?;
    product.expansion.write_geotiff(dir.join("expansion.tif"))?;
    render_expansion(dir.join("expansion.png"), &product.expansion)?;
    write_proportions_csv(dir.join("proportions.csv"), &product.proportions, &scheme)?;
    write_transitions_csv(dir.join("transitions.csv"), &product.transitions, &scheme)?;
    for y in &product.expansion.years {
        tracing::info!(
            stage = "change",
            year = y,
            new_urban = product.expansion.count_since(*y),
            "expansion"
        );
    }
    Ok(product)
}

pub fn cmd_sweep(cfg: &PipelineConfig) -> Result<Vec<(usize, MetricReport)>> {
    cfg.validate_common()?;
    let kind: ModelKind = cfg
        .sweep
        .model
        .parse()
        .map_err(|e| LulcError::Config(format!("sweep.model: {e}")))?;
    if kind == ModelKind::KMeans {
        return Err(LulcError::Config("sweep.model: needs a supervised model".into()));
    }
    if cfg.sweep.sizes.is_empty() || cfg.sweep.sizes.contains(&0) {
        return Err(LulcError::Config("sweep.sizes: need positive sample sizes".into()));
    }
    let spec = cfg.model_spec(kind)?;
    let scheme = cfg.scheme()?;
    let (raster, points) = load_labeled(cfg, &scheme)?;
    let rows = sample_size_sweep(
        &raster,
        &points,
        &scheme,
        &cfg.sweep.sizes,
        &spec,
        cfg.dataset.chip_size,
        derive_seed(cfg.seed, "sweep"),
    )?;
    let dir = cfg.out_dir().join(SWEEP_DIR);
    mkdir(&dir)?;
    let palette = scheme.palette();
    let year = cfg.dataset.label_year.unwrap_or_default();
    for row in &rows {
        let map = classify_map(&raster, &row.model, year, &scheme)?;
        render_class_map(dir.join(format!("map_{}.png", row.sample_size)), &map, &palette)?;
    }
    let table: Vec<(usize, MetricReport)> = rows.into_iter().map(|r| (r.sample_size, r.report)).collect();
    write_sweep_csv(dir.join("sweep.csv"), &table)?;
    Ok(table)
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<synth::SynthData> {
    let data = synth::generate(&cfg.synth, cfg.seed)?;
    let dir = cfg.out_dir();
    mkdir(&dir)?;
    synth::write_fixtures(&data, &dir, cfg.seed)?;
    tracing::info!(
        stage = "synth",
        scenes = data.scenes.len(),
        labels = data.labels.len(),
        dir = %dir.display(),
        "fixtures written"
    );
    Ok(data)
}
