//! Fits any model kind on a chip dataset: normalization, validation holdout
//! for the networks, and seed derivation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::dataset::{ChipDataset, NormStats};
use crate::error::{LulcError, Result};
use crate::models::{
    forest_fit, kmeans_fit, nn_fit, CnnModel, CnnSpec, ForestParams, KMeansConfig, LearningCurve, MlpModel, ModelBody,
    ModelKind, Samples, TrainConfig, TrainedModel,
};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    KMeans(KMeansConfig),
    Forest(ForestParams),
    Mlp { hidden: usize, train: TrainConfig },
    Cnn { spec: CnnSpec, train: TrainConfig },
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::KMeans => ModelSpec::KMeans(KMeansConfig::default()),
            ModelKind::Forest => ModelSpec::Forest(ForestParams::default()),
            ModelKind::Mlp => ModelSpec::Mlp {
                hidden: MlpModel::DEFAULT_HIDDEN,
                train: TrainConfig::default(),
            },
            ModelKind::Cnn => ModelSpec::Cnn {
                spec: CnnSpec::default(),
                train: TrainConfig::default(),
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::KMeans(_) => ModelKind::KMeans,
            ModelSpec::Forest(_) => ModelKind::Forest,
            ModelSpec::Mlp { .. } => ModelKind::Mlp,
            ModelSpec::Cnn { .. } => ModelKind::Cnn,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: TrainedModel,
    pub curve: Option<LearningCurve>,
}

/// Stratified holdout by chip center, so duplicated chips never straddle
/// the train/validation boundary. Returns (train, validation) indices.
pub fn holdout_split(ds: &ChipDataset, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let labels = ds.labels()?;
    let mut by_class: BTreeMap<usize, BTreeMap<(usize, usize), Vec<usize>>> = BTreeMap::new();
    for (i, (chip, &l)) in ds.chips.iter().zip(&labels).enumerate() {
        by_class.entry(l).or_default().entry(chip.center).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (class, groups) in by_class {
        let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
        let mut rng = seed::rng(seed, &format!("holdout/class{class}"));
        groups.shuffle(&mut rng);
        let mut n_val = (groups.len() as f64 * fraction).round() as usize;
        if groups.len() >= 2 {
            n_val = n_val.clamp(1, groups.len() - 1);
        } else {
            n_val = 0;
        }
        for (g, members) in groups.into_iter().enumerate() {
            if g < n_val {
                val.extend(members);
            } else {
                train.extend(members);
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Fraction of the training chips held out to drive early stopping.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Fits `spec` on raw (unnormalized) chips. Normalization statistics are
/// fitted on `train` and stored with the model.
pub fn fit_model(
    spec: &ModelSpec,
    train: &ChipDataset,
    n_classes: usize,
    class_names: &[String],
    seed: u64,
) -> Result<FitOutput> {
    let stats = NormStats::fit(train)?;
    let normalized = stats.apply(train)?;
    let wrap = |body| TrainedModel {
        body,
        chip_size: train.chip_size,
        channels: train.channels,
        normalization: Some(stats.clone()),
        class_names: class_names.to_vec(),
    };

    match spec {
        ModelSpec::KMeans(cfg) => {
            let mut data = Vec::with_capacity(normalized.len() * normalized.input_dim());
            normalized.chips.iter().for_each(|c| data.extend_from_slice(&c.data));
            let cfg = KMeansConfig {
                seed: seed::derive_seed(seed, "kmeans"),
                ..cfg.clone()
            };
            let fit = kmeans_fit(&data, normalized.input_dim(), &cfg)?;
            Ok(FitOutput {
                model: wrap(ModelBody::KMeans(fit.model)),
                curve: None,
            })
        }
        ModelSpec::Forest(params) => {
            let s = Samples::from_chips(&normalized)?;
            let m = forest_fit(&s.data, s.dim, &s.labels, params, seed::derive_seed(seed, "forest"))?;
            Ok(FitOutput {
                model: wrap(ModelBody::Forest(m)),
                curve: None,
            })
        }
        ModelSpec::Mlp { hidden, train: cfg } => {
            let (tr, va) = network_sets(&normalized, seed)?;
            let mut m = MlpModel::new(tr.dim, *hidden, n_classes, seed::derive_seed(seed, "init"));
            let curve = nn_fit(&mut m, &tr, &va, &train_cfg(cfg, seed))?;
            Ok(FitOutput {
                model: wrap(ModelBody::Mlp(m)),
                curve: Some(curve),
            })
        }
        ModelSpec::Cnn { spec: cnn, train: cfg } => {
            let (tr, va) = network_sets(&normalized, seed)?;
            let mut m = CnnModel::new(
                train.chip_size,
                train.channels,
                cnn.clone(),
                n_classes,
                seed::derive_seed(seed, "init"),
            )?;
            let curve = nn_fit(&mut m, &tr, &va, &train_cfg(cfg, seed))?;
            Ok(FitOutput {
                model: wrap(ModelBody::Cnn(m)),
                curve: Some(curve),
            })
        }
    }
}

fn train_cfg(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: seed::derive_seed(seed, "train"),
        ..cfg.clone()
    }
}

fn network_sets(ds: &ChipDataset, seed: u64) -> Result<(Samples, Samples)> {
    let (tr, va) = holdout_split(ds, VALIDATION_FRACTION, seed::derive_seed(seed, "holdout"))?;
    if va.is_empty() {
        return Err(LulcError::InsufficientData(
            "too few distinct chips to hold out a validation set".into(),
        ));
    }
    let all = Samples::from_chips(ds)?;
    Ok((all.subset(&tr), all.subset(&va)))
}
