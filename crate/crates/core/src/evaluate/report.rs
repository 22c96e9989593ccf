//! CSV tables and PNG charts for evaluation results.
//!
//! - sweep: `sample_size,accuracy,precision,recall,f1_score`
//! - cross-validation: `fold,<model>...` with rows `1..k`, `Mean`, `Std`
//! - comparison: `model,accuracy,precision,recall,f1_score`
//! - learning curve: `epoch,train_loss,train_accuracy,val_loss,val_accuracy`
//! - ROC: `class,class_name,auc` plus a `macro` row; excluded classes have an empty auc

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{ConfusionMatrix, MetricReport, RocAuc};
use crate::error::{LulcError, Result};
use crate::models::LearningCurve;
use crate::render::{line_chart, Canvas};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LulcError::io(path, e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = create(path)?;
    for l in lines {
        writeln!(w, "{l}").map_err(|e| LulcError::io(path, e))?;
    }
    w.flush().map_err(|e| LulcError::io(path, e))
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[(usize, MetricReport)]) -> Result<()> {
    let mut lines = vec!["sample_size,accuracy,precision,recall,f1_score".to_string()];
    for (size, r) in rows {
        lines.push(format!(
            "{size},{},{},{},{}",
            f(r.overall_accuracy),
            f(r.macro_precision),
            f(r.macro_recall),
            f(r.macro_f1)
        ));
    }
    write_lines(path.as_ref(), &lines)
}

/// One column of fold accuracies per model, then mean and population std.
pub fn write_cv_table(path: impl AsRef<Path>, columns: &[(&str, &[f64])]) -> Result<()> {
    let k = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != k) {
        return Err(LulcError::Shape("models have different fold counts".into()));
    }
    let mut lines = vec![std::iter::once("fold")
        .chain(columns.iter().map(|c| c.0))
        .collect::<Vec<_>>()
        .join(",")];
    for i in 0..k {
        let cells: Vec<String> = columns.iter().map(|c| f(c.1[i])).collect();
        lines.push(format!("{},{}", i + 1, cells.join(",")));
    }
    let stats: Vec<(f64, f64)> = columns.iter().map(|c| super::mean_std(c.1)).collect();
    lines.push(format!(
        "Mean,{}",
        stats.iter().map(|s| f(s.0)).collect::<Vec<_>>().join(",")
    ));
    lines.push(format!(
        "Std,{}",
        stats.iter().map(|s| f(s.1)).collect::<Vec<_>>().join(",")
    ));
    write_lines(path.as_ref(), &lines)
}

pub fn write_comparison_csv(path: impl AsRef<Path>, rows: &[(&str, &MetricReport)]) -> Result<()> {
    let mut lines = vec!["model,accuracy,precision,recall,f1_score".to_string()];
    for (name, r) in rows {
        lines.push(format!(
            "{name},{},{},{},{}",
            f(r.overall_accuracy),
            f(r.macro_precision),
            f(r.macro_recall),
            f(r.macro_f1)
        ));
    }
    write_lines(path.as_ref(), &lines)
}

pub fn write_learning_curve_csv(path: impl AsRef<Path>, curve: &LearningCurve) -> Result<()> {
    let mut lines = vec!["epoch,train_loss,train_accuracy,val_loss,val_accuracy".to_string()];
    for e in &curve.epochs {
        lines.push(format!(
            "{},{},{},{},{}",
            e.epoch,
            f(e.train_loss),
            f(e.train_accuracy),
            f(e.val_loss),
            f(e.val_accuracy)
        ));
    }
    write_lines(path.as_ref(), &lines)
}

pub fn write_roc_csv(path: impl AsRef<Path>, roc: &RocAuc, class_names: &[String]) -> Result<()> {
    let mut lines = vec!["class,class_name,auc".to_string()];
    for (c, auc) in roc.per_class.iter().enumerate() {
        let name = class_names.get(c).map(String::as_str).unwrap_or("");
        lines.push(format!("{c},{name},{}", auc.map(f).unwrap_or_default()));
    }
    lines.push(format!("macro,,{}", f(roc.macro_auc)));
    write_lines(path.as_ref(), &lines)
}

const CELL: usize = 24;

/// Heatmap of row-normalized counts, white (0) to dark blue (1).
pub fn render_confusion_png(path: impl AsRef<Path>, cm: &ConfusionMatrix) -> Result<()> {
    let n = cm.n_classes();
    let mut canvas = Canvas::new(n * CELL + 2, n * CELL + 2, [0, 0, 0]);
    for t in 0..n {
        let row_total: u64 = cm.row(t).iter().sum();
        for p in 0..n {
            let share = if row_total > 0 {
                cm.get(t, p) as f64 / row_total as f64
            } else {
                0.0
            };
            let mix = |hi: f64, lo: f64| (hi + (lo - hi) * share).round() as u8;
            let color = [mix(255.0, 8.0), mix(255.0, 48.0), mix(255.0, 107.0)];
            canvas.fill_rect(1 + p * CELL, 1 + t * CELL, CELL - 1, CELL - 1, color);
        }
    }
    canvas.save(path)
}

/// Loss curves (train blue, validation orange) above accuracy curves.
pub fn render_learning_curve_png(path: impl AsRef<Path>, curve: &LearningCurve) -> Result<()> {
    let col = |g: fn(&crate::models::EpochRecord) -> f64| curve.epochs.iter().map(g).collect::<Vec<f64>>();
    let (tl, vl, ta, va) = (
        col(|e| e.train_loss),
        col(|e| e.val_loss),
        col(|e| e.train_accuracy),
        col(|e| e.val_accuracy),
    );
    let blue = [31, 119, 180];
    let orange = [255, 127, 14];
    let top = line_chart(&[(&tl, blue), (&vl, orange)], 480, 240);
    let bottom = line_chart(&[(&ta, blue), (&va, orange)], 480, 240);
    let mut out = Canvas::new(480, 480, [255, 255, 255]);
    out.rgb[..top.rgb.len()].copy_from_slice(&top.rgb);
    out.rgb[top.rgb.len()..].copy_from_slice(&bottom.rgb);
    out.save(path)
}
