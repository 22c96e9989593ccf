//! Confusion matrices, one-vs-rest metrics, ROC-AUC, stratified k-fold
//! cross-validation and the sample-size sweep.

pub mod report;

use rand::seq::SliceRandom;

use crate::dataset::{build_labeled_set, ChipDataset, ClassScheme, LabeledPoint, SplitConfig, UnderfullPolicy};
use crate::error::{LulcError, Result};
use crate::models::{Samples, TrainedModel};
use crate::raster::Raster;
use crate::seed;
use crate::train::{fit_model, ModelSpec};

pub use report::{
    render_confusion_png, render_learning_curve_png, write_comparison_csv, write_cv_table, write_learning_curve_csv,
    write_roc_csv, write_sweep_csv,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(n_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n_classes * n_classes {
            return Err(LulcError::Shape(format!(
                "{} counts for {n_classes} classes",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { n_classes, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Count of samples with true class `t` predicted as `p`.
    pub fn get(&self, t: usize, p: usize) -> u64 {
        self.counts[t * self.n_classes + p]
    }

    pub fn row(&self, t: usize) -> &[u64] {
        &self.counts[t * self.n_classes..(t + 1) * self.n_classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }
}

/// Rows are true classes, columns predicted.
pub fn confusion(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(LulcError::Shape(format!(
            "{} true labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut counts = vec![0u64; n_classes * n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= n_classes || p >= n_classes {
            return Err(LulcError::Config(format!(
                "label {} outside {n_classes} classes",
                t.max(p)
            )));
        }
        counts[t * n_classes + p] += 1;
    }
    Ok(ConfusionMatrix { n_classes, counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a denominator was zero and the metric was defined as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_class: Vec<ClassMetrics>,
    /// trace / total.
    pub overall_accuracy: f64,
    pub macro_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// One-vs-rest TP/TN/FP/FN per class, then
/// accuracy = (TP+TN)/(TP+TN+FP+FN), precision = TP/(TP+FP),
/// recall = TP/(TP+FN), F1 = 2TP/(2TP+FP+FN). Macro values are unweighted means.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let total = cm.total();
    if total == 0 || cm.n_classes == 0 {
        return Err(LulcError::EmptyInput("confusion matrix is empty".into()));
    }
    let c = cm.n_classes;
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let fn_ = cm.row(k).iter().sum::<u64>() - tp;
            let fp = (0..c).map(|t| cm.get(t, k)).sum::<u64>() - tp;
            let tn = total - tp - fn_ - fp;
            let (accuracy, _) = ratio(tp + tn, tp + tn + fp + fn_);
            let (precision, precision_undefined) = ratio(tp, tp + fp);
            let (recall, recall_undefined) = ratio(tp, tp + fn_);
            let (f1, f1_undefined) = ratio(2 * tp, 2 * tp + fp + fn_);
            ClassMetrics {
                tp,
                tn,
                fp,
                fn_,
                accuracy,
                precision,
                recall,
                f1,
                precision_undefined,
                recall_undefined,
                f1_undefined,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
    Ok(MetricReport {
        overall_accuracy: cm.trace() as f64 / total as f64,
        macro_accuracy: mean(|m| m.accuracy),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocAuc {
    /// `None` for classes absent from the truth (or with no negatives).
    pub per_class: Vec<Option<f64>>,
    pub macro_auc: f64,
    pub excluded: Vec<usize>,
}

/// Mann-Whitney AUC of `scores` for positives vs negatives, midranks for ties.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// One-vs-rest AUC per class from probability rows.
pub fn roc_auc(truth: &[usize], probs: &[Vec<f64>], n_classes: usize) -> Result<RocAuc> {
    if truth.len() != probs.len() {
        return Err(LulcError::Shape(format!(
            "{} labels vs {} score rows",
            truth.len(),
            probs.len()
        )));
    }
    if let Some(r) = probs.iter().find(|r| r.len() != n_classes) {
        return Err(LulcError::Shape(format!(
            "score row of {} for {n_classes} classes",
            r.len()
        )));
    }
    let mut per_class = Vec::with_capacity(n_classes);
    let mut excluded = Vec::new();
    for c in 0..n_classes {
        let scores: Vec<f64> = probs.iter().map(|r| r[c]).collect();
        let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let auc = binary_auc(&scores, &pos);
        if auc.is_none() {
            excluded.push(c);
        }
        per_class.push(auc);
    }
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(RocAuc {
        per_class,
        macro_auc,
        excluded,
    })
}

/// ROC points `(fpr, tpr)` sweeping the threshold from high to low.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = positive.iter().filter(|&&p| p).count().max(1) as f64;
    let n_neg = positive.iter().filter(|&&p| !p).count().max(1) as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        pts.push((fp / n_neg, tp / n_pos));
    }
    pts
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(LulcError::Shape("labelings differ in length".into()));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().map(|&v| c2(v)).sum();
    let sum_a: f64 = (0..ka).map(|i| c2(table[i * kb..(i + 1) * kb].iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2((0..ka).map(|i| table[i * kb + j]).sum())).sum();
    let total = c2(n as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((sum_ij - expected) / (max - expected))
}

/// `k` disjoint, exhaustive folds, stratified by class: each class is
/// shuffled and dealt round-robin, continuing the deal across classes, so
/// fold sizes and per-class counts both differ by at most one.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(LulcError::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(LulcError::InsufficientData(format!(
            "{} samples for {k} folds",
            labels.len()
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut seed::rng(seed, &format!("folds/class{c}")));
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

pub trait Predictor {
    fn predict_rows(&self, data: &[f64]) -> Result<Vec<usize>>;
}

impl Predictor for TrainedModel {
    fn predict_rows(&self, data: &[f64]) -> Result<Vec<usize>> {
        self.predict(data)
    }
}

#[derive(Debug, Clone)]
pub struct CvResult<M> {
    pub fold_accuracy: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the fold accuracies.
    pub std: f64,
    pub best_fold: usize,
    pub folds: Vec<Vec<usize>>,
    pub best_model: M,
    pub stratified: bool,
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// k-fold CV with a caller-supplied trainer `fit(train_indices, fold)`.
/// The model of the most accurate fold (earliest on ties) is returned.
pub fn kfold_cv_with<M, F>(samples: &Samples, k: usize, seed: u64, mut fit: F) -> Result<CvResult<M>>
where
    M: Predictor,
    F: FnMut(&[usize], usize) -> Result<M>,
{
    let folds = stratified_folds(&samples.labels, k, seed)?;
    let mut accs = Vec::with_capacity(k);
    let mut best: Option<(f64, usize, M)> = None;
    for (f, test) in folds.iter().enumerate() {
        let mut in_test = vec![false; samples.len()];
        test.iter().for_each(|&i| in_test[i] = true);
        let train: Vec<usize> = (0..samples.len()).filter(|&i| !in_test[i]).collect();
        let model = fit(&train, f)?;
        let held = samples.subset(test);
        let pred = model.predict_rows(&held.data)?;
        let acc = pred.iter().zip(&held.labels).filter(|(a, b)| a == b).count() as f64 / held.len() as f64;
        tracing::info!(fold = f + 1, accuracy = acc, "fold");
        accs.push(acc);
        if best.as_ref().is_none_or(|b| acc > b.0) {
            best = Some((acc, f, model));
        }
    }
    let (mean, std) = mean_std(&accs);
    let (_, best_fold, best_model) = best.expect("k >= 2 folds");
    Ok(CvResult {
        fold_accuracy: accs,
        mean,
        std,
        best_fold,
        folds,
        best_model,
        stratified: true,
    })
}

/// k-fold CV of a model specification over a labelled chip dataset.
pub fn kfold_cv(
    dataset: &ChipDataset,
    spec: &ModelSpec,
    scheme: &ClassScheme,
    k: usize,
    seed: u64,
) -> Result<CvResult<TrainedModel>> {
    let samples = Samples::from_chips(dataset)?;
    let names: Vec<String> = scheme.classes().iter().map(|c| c.name.clone()).collect();
    kfold_cv_with(&samples, k, seed, |train, f| {
        let sub = dataset.subset(train);
        let fold_seed = seed::derive_seed(seed, &format!("cv/fold/{f}"));
        Ok(fit_model(spec, &sub, scheme.len(), &names, fold_seed)?.model)
    })
}

/// Per-class train share used by the sweep when splitting each size.
pub const SWEEP_TRAIN_SHARE: f64 = 0.7;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub sample_size: usize,
    pub report: MetricReport,
    pub model: TrainedModel,
}

/// Trains and tests one model per total sample size. Each size is split
/// evenly over the classes and 70/30 into train/test per class.
pub fn sample_size_sweep(
    raster: &Raster,
    points: &[LabeledPoint],
    scheme: &ClassScheme,
    sizes: &[usize],
    spec: &ModelSpec,
    chip_size: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let usable = points.iter().filter(|p| raster.is_valid(p.col, p.row)).count();
    if let Some(&largest) = sizes.iter().max() {
        if usable < largest {
            return Err(LulcError::InsufficientData(format!(
                "{usable} usable labels for a sample size of {largest}"
            )));
        }
    }
    let names: Vec<String> = scheme.classes().iter().map(|c| c.name.clone()).collect();
    sizes
        .iter()
        .map(|&size| {
            let per_class = size / scheme.len();
            let train_n = (per_class as f64 * SWEEP_TRAIN_SHARE).round() as usize;
            let cfg = SplitConfig {
                per_class_train: train_n,
                per_class_test: per_class - train_n,
                chip_size,
                underfull: UnderfullPolicy::Upsample,
                seed: seed::derive_seed(seed, &format!("sweep/{size}/split")),
            };
            let split = build_labeled_set(raster, points, scheme, &cfg)?;
            let fit = fit_model(
                spec,
                &split.train,
                scheme.len(),
                &names,
                seed::derive_seed(seed, &format!("sweep/{size}")),
            )?;
            let test = Samples::from_chips(&split.test)?;
            let pred = fit.model.predict(&test.data)?;
            let report = metrics(&confusion(&test.labels, &pred, scheme.len())?)?;
            tracing::info!(size, accuracy = report.overall_accuracy, "sweep");
            Ok(SweepRow {
                sample_size: size,
                report,
                model: fit.model,
            })
        })
        .collect()
}
