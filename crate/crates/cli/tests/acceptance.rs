//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;

use lulc_cli::commands::{cmd_change, cmd_classify, cmd_composite, cmd_sweep, cmd_synth, cmd_train};
use lulc_cli::config::PipelineConfig;
use lulc_core::change::expansion_iou;
use lulc_core::dataset::{cochran_sample_size, iter_chips, minimum_sample_size};
use lulc_core::evaluate::{adjusted_rand_index, binary_auc, metrics, roc_auc, ConfusionMatrix};
use lulc_core::indices::{normalized_difference, BandMap, IndexKind, IndexRecipe};
use lulc_core::models::{
    forest_fit, gradient_check, kmeans_fit, CnnModel, CnnSpec, ForestParams, KMeansConfig, MlpModel, NeuralModel,
    Samples,
};
use lulc_core::preprocess::{apply_qa_mask, median_composite, QaBitSpec, TimeStack};
use lulc_core::raster::{Band, GeoRef, Raster};
use lulc_core::seed::rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(i as u64 * 16)
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(1, "acceptance/median");
    let (w, h, bands) = (16, 16, 5);
    for stack_no in 0..50 {
        let epochs = r.random_range(1..=9);
        let mut rasters = Vec::new();
        for e in 0..epochs {
            let bs = (0..bands)
                .map(|b| {
                    Band::new(
                        format!("b{b}"),
                        (0..w * h).map(|_| r.random_range(0..40) as f64 / 8.0).collect(),
                    )
                })
                .collect();
            let mask = (0..w * h).map(|_| r.random_bool(0.7)).collect();
            rasters.push((day(e), Raster::new(w, h, bs, mask, GeoRef::default()).unwrap()));
        }
        let stack = TimeStack::new(rasters.clone()).unwrap();
        let got = median_composite(&stack).map_err(|e| e.to_string())?;
        for p in 0..w * h {
            let valid: Vec<&Raster> = rasters.iter().map(|(_, r)| r).filter(|r| r.mask()[p]).collect();
            ensure(got.mask()[p] == !valid.is_empty(), || {
                format!("stack {stack_no} pixel {p}: mask")
            })?;
            if valid.is_empty() {
                continue;
            }
            for b in 0..bands {
                let mut v: Vec<f64> = valid.iter().map(|r| r.bands()[b].values[p]).collect();
                v.sort_by(f64::total_cmp);
                let want = v[(v.len() - 1) / 2];
                ensure(got.bands()[b].values[p] == want, || {
                    format!(
                        "stack {stack_no} pixel {p} band {b}: {} != {want}",
                        got.bands()[b].values[p]
                    )
                })?;
            }
        }
    }
    within(t0.elapsed(), 5.0)?;
    Ok("50 stacks equal the sort-and-pick oracle exactly".into())
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(2, "acceptance/qa");
    let (w, h) = (32, 32);
    let n = w * h;
    for trial in 0..200 {
        let n_bits = r.random_range(1..=16);
        let mut all: Vec<u8> = (0..16).collect();
        all.shuffle(&mut r);
        let bits: Vec<u8> = all[..n_bits].to_vec();
        let spec = QaBitSpec::new(bits.iter().copied()).unwrap();
        let flag_mask: u16 = bits.iter().fold(0, |m, b| m | (1 << b));
        let mask: Vec<bool> = (0..n).map(|_| r.random_bool(0.8)).collect();
        let mut valid: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        valid.shuffle(&mut r);
        let k = r.random_range(0..=valid.len().min(100));
        let mut qa: Vec<f64> = (0..n).map(|_| (r.random::<u16>() & !flag_mask) as f64).collect();
        for &p in &valid[..k] {
            let bit = bits[r.random_range(0..bits.len())];
            qa[p] = ((r.random::<u16>() & !flag_mask) | (1 << bit)) as f64;
        }
        let raster = Raster::new(
            w,
            h,
            vec![Band::new("v", vec![0.0; n])],
            mask.clone(),
            GeoRef::default(),
        )
        .unwrap();
        let qa = Band::new("qa", qa);
        let once = apply_qa_mask(&raster, &qa, &spec).map_err(|e| e.to_string())?;
        let newly = (0..n).filter(|&i| mask[i] && !once.mask()[i]).count();
        ensure(newly == k, || {
            format!("trial {trial}: {newly} newly masked, planted {k}")
        })?;
        let twice = apply_qa_mask(&once, &qa, &spec).map_err(|e| e.to_string())?;
        ensure(twice.mask() == once.mask(), || format!("trial {trial}: not idempotent"))?;
    }
    within(t0.elapsed(), 1.0)?;
    Ok("200 random bit specs: exactly K newly masked, idempotent".into())
}

fn criterion_3() -> Outcome {
    let mut r = rng(3, "acceptance/indices");
    let n = 100_000;
    let mut col = |zero_share: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if r.random_bool(zero_share) {
                    0.0
                } else {
                    r.random_range(0.0..1.0)
                }
            })
            .collect()
    };
    let bands = vec![
        Band::new("green", col(0.01)),
        Band::new("red", col(0.01)),
        Band::new("nir", col(0.01)),
        Band::new("swir1", col(0.01)),
    ];
    let raster = Raster::from_bands(n, 1, bands, GeoRef::default()).unwrap();
    let logical = BandMap::new();
    let mut checked = 0;
    for kind in IndexKind::ALL {
        let recipe = IndexRecipe::for_kind(kind, &logical);
        let fwd = normalized_difference(&raster, &recipe).map_err(|e| e.to_string())?;
        let rev = normalized_difference(&raster, &recipe.swapped()).map_err(|e| e.to_string())?;
        for i in 0..n {
            if !fwd.valid[i] {
                continue;
            }
            let v = fwd.band.values[i];
            ensure((-1.0..=1.0).contains(&v), || format!("{kind} = {v} at {i}"))?;
            ensure(rev.band.values[i] == -v, || format!("{kind} not antisymmetric at {i}"))?;
            checked += 1;
        }
    }
    let same: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let equal = Raster::from_bands(
        n,
        1,
        vec![Band::new("nir", same.clone()), Band::new("red", same)],
        GeoRef::default(),
    )
    .unwrap();
    let ndvi = lulc_core::indices::ndvi(&equal).map_err(|e| e.to_string())?;
    ensure(
        ndvi.band
            .values
            .iter()
            .zip(&ndvi.valid)
            .all(|(&v, &ok)| !ok || v == 0.0),
        || "NDVI(NIR = R) is not exactly 0".into(),
    )?;
    Ok(format!(
        "{checked} valid values in [-1, 1], exact antisymmetry, NDVI(NIR=R)=0"
    ))
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let (w, h, c) = (780, 818, 3);
    let bands = (0..c)
        .map(|b| Band::new(format!("b{b}"), (0..w * h).map(|i| (i * 3 + b) as f64).collect()))
        .collect();
    let raster = Raster::from_bands(w, h, bands, GeoRef::default()).unwrap();
    let mut count = 0usize;
    let mut corners = Vec::new();
    let corner_set = [(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)];
    for chip in iter_chips(&raster, 9).map_err(|e| e.to_string())? {
        count += 1;
        if corner_set.contains(&chip.center) {
            corners.push(chip);
        }
    }
    ensure(count == 638_040, || format!("{count} chips, expected 638040"))?;
    ensure(corners.len() == 4, || "corner chips missing".into())?;
    for chip in &corners {
        let (cx, cy) = chip.center;
        for y in 0..9 {
            for x in 0..9 {
                let sx = (cx as i64 + x as i64 - 4).clamp(0, w as i64 - 1) as usize;
                let sy = (cy as i64 + y as i64 - 4).clamp(0, h as i64 - 1) as usize;
                for b in 0..c {
                    ensure(chip.get(y, x, b) == raster.value(b, sx, sy), || {
                        format!("corner {:?} cell ({x},{y}) not edge-replicated", chip.center)
                    })?;
                }
            }
        }
    }
    within(t0.elapsed(), 30.0)?;
    Ok("780x818 raster gives 638040 chips; corners edge-replicated".into())
}

fn criterion_5() -> Outcome {
    let m = minimum_sample_size(7, 7);
    ensure(m == 490, || format!("minimum_sample_size(7, 7) = {m}"))?;
    let n = cochran_sample_size(638_040, 1.96, 0.05, 0.5);
    ensure(n.abs_diff(384) <= 1, || format!("Cochran sample size {n}"))?;
    Ok(format!("rule of thumb {m}, Cochran {n}"))
}

fn criterion_6() -> Outcome {
    let mut r = rng(6, "acceptance/kmeans");
    for inst in 0..100 {
        let n = r.random_range(20..200);
        let dim = r.random_range(1..=5);
        let k = r.random_range(2..=8);
        let data: Vec<f64> = (0..n * dim).map(|_| r.random_range(-5.0..5.0)).collect();
        let cfg = KMeansConfig {
            k,
            seed: inst,
            ..KMeansConfig::default()
        };
        let fit = kmeans_fit(&data, dim, &cfg).map_err(|e| e.to_string())?;
        for (i, pair) in fit.objective.windows(2).enumerate() {
            ensure(pair[1] <= pair[0], || {
                format!(
                    "instance {inst}: objective rose at step {i}: {} -> {}",
                    pair[0], pair[1]
                )
            })?;
        }
    }
    let mut worst: f64 = 1.0;
    for s in 0..20u64 {
        let mut g = rng(s, "acceptance/blobs");
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for (c, (x, y)) in centers.iter().enumerate() {
            for _ in 0..100 {
                data.push(x + rand_distr::Distribution::sample(&normal, &mut g));
                data.push(y + rand_distr::Distribution::sample(&normal, &mut g));
                truth.push(c);
            }
        }
        let cfg = KMeansConfig {
            k: 3,
            seed: s,
            ..KMeansConfig::default()
        };
        let fit = kmeans_fit(&data, 2, &cfg).map_err(|e| e.to_string())?;
        let ari = adjusted_rand_index(&truth, &fit.labels).map_err(|e| e.to_string())?;
        worst = worst.min(ari);
    }
    ensure(worst >= 0.99, || format!("worst 3-blob ARI {worst}"))?;
    Ok(format!(
        "objective non-increasing on 100 instances; min ARI {worst:.4} over 20 seeds"
    ))
}

fn criterion_7() -> Outcome {
    let mut r = rng(7, "acceptance/forest");
    let (n, dim, classes) = (400, 6, 4);
    let data: Vec<f64> = (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let x = &data[i * dim..(i + 1) * dim];
            let s = (x[0] > 0.0) as usize * 2 + (x[1] + 0.3 * x[2] > 0.0) as usize;
            if r.random_bool(0.1) {
                r.random_range(0..classes)
            } else {
                s
            }
        })
        .collect();
    let params = ForestParams {
        n_estimators: 25,
        ..ForestParams::default()
    };
    let model = forest_fit(&data, dim, &labels, &params, 7).map_err(|e| e.to_string())?;
    let queries: Vec<f64> = (0..1000 * dim).map(|_| r.random_range(-1.5..1.5)).collect();
    let (pred, votes) = model.predict_with_votes(&queries).map_err(|e| e.to_string())?;
    for q in 0..1000 {
        let x = &queries[q * dim..(q + 1) * dim];
        let per_tree: Vec<usize> = model.trees.iter().map(|t| t.predict_one(x)).collect();
        ensure(votes[q] == per_tree, || {
            format!("query {q}: exposed votes differ from per-tree predictions")
        })?;
        let mut counts = vec![0usize; classes];
        per_tree.iter().for_each(|&v| counts[v] += 1);
        let best = counts.iter().max().copied().unwrap_or(0);
        let recount = counts.iter().position(|&c| c == best).unwrap();
        ensure(pred[q] == recount, || {
            format!("query {q}: predicted {} but recount gives {recount}", pred[q])
        })?;
    }
    Ok("1000 predictions equal the per-tree vote recount".into())
}

fn random_samples(r: &mut impl Rng, n: usize, dim: usize, classes: usize) -> Samples {
    let data = (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|i| i % classes).collect();
    Samples::new(data, dim, labels).unwrap()
}

/// Every weight and bias drawn afresh, so no pre-activation sits on a ReLU kink.
fn randomize(params: &mut [f64], r: &mut impl Rng) {
    params.iter_mut().for_each(|p| *p = r.random_range(-1.0..1.0));
}

fn criterion_8() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(8, "acceptance/gradcheck");
    let mut worst_mlp: f64 = 0.0;
    let mut worst_cnn: f64 = 0.0;
    for i in 0..10 {
        let batch = random_samples(&mut r, 6, 12, 3);
        let mut mlp = MlpModel::new(12, 5, 3, 100 + i);
        randomize(mlp.network_mut().params_mut(), &mut r);
        worst_mlp = worst_mlp.max(gradient_check(mlp.network(), &batch, 1e-6));

        let spec = CnnSpec {
            widths: vec![4, 3],
            dropout: vec![0.25, 0.5],
        };
        let mut cnn = CnnModel::new(3, 2, spec, 3, 200 + i).map_err(|e| e.to_string())?;
        randomize(cnn.network_mut().params_mut(), &mut r);
        let batch = random_samples(&mut r, 6, 18, 3);
        worst_cnn = worst_cnn.max(gradient_check(cnn.network(), &batch, 1e-6));
    }
    ensure(worst_mlp < 1e-4, || format!("MLP max relative error {worst_mlp:e}"))?;
    ensure(worst_cnn < 1e-4, || format!("CNN max relative error {worst_cnn:e}"))?;
    within(t0.elapsed(), 60.0)?;
    Ok(format!("max relative error MLP {worst_mlp:.2e}, CNN {worst_cnn:.2e}"))
}

fn criterion_9() -> Outcome {
    let mut r = rng(9, "acceptance/metrics");
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    for m in 0..20 {
        let c = r.random_range(2..=8);
        let counts: Vec<u64> = (0..c * c)
            .map(|i| r.random_range(0..50) + if i % (c + 1) == 0 { 1 } else { 0 })
            .collect();
        let cm = ConfusionMatrix::from_counts(c, counts.clone()).map_err(|e| e.to_string())?;
        let rep = metrics(&cm).map_err(|e| e.to_string())?;
        let total: u64 = counts.iter().sum();
        let (mut sp, mut sr, mut sf, mut sa) = (0.0, 0.0, 0.0, 0.0);
        let mut trace = 0;
        for k in 0..c {
            let tp = counts[k * c + k] as f64;
            let row: u64 = (0..c).map(|j| counts[k * c + j]).sum();
            let col: u64 = (0..c).map(|i| counts[i * c + k]).sum();
            let precision = tp / col as f64;
            let recall = tp / row as f64;
            let f1 = 2.0 * precision * recall / (precision + recall);
            let tn = total as f64 - row as f64 - col as f64 + tp;
            let acc = (tp + tn) / total as f64;
            let got = &rep.per_class[k];
            ensure(
                close(got.precision, precision)
                    && close(got.recall, recall)
                    && close(got.f1, f1)
                    && close(got.accuracy, acc),
                || format!("matrix {m} class {k}: per-class metrics differ"),
            )?;
            sp += precision;
            sr += recall;
            sf += f1;
            sa += acc;
            trace += counts[k * c + k];
        }
        let cf = c as f64;
        ensure(
            close(rep.macro_precision, sp / cf)
                && close(rep.macro_recall, sr / cf)
                && close(rep.macro_f1, sf / cf)
                && close(rep.macro_accuracy, sa / cf)
                && close(rep.overall_accuracy, trace as f64 / total as f64),
            || format!("matrix {m}: macro metrics differ"),
        )?;
    }

    let oracle = |scores: &[f64], pos: &[bool]| -> f64 {
        let (mut twice, mut pairs) = (0u64, 0u64);
        for i in (0..scores.len()).filter(|&i| pos[i]) {
            for j in (0..scores.len()).filter(|&j| !pos[j]) {
                pairs += 1;
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        twice as f64 / (2 * pairs) as f64
    };
    for t in 0..100 {
        let n = r.random_range(2..=200);
        let levels = r.random_range(2..40);
        let scores: Vec<f64> = (0..n)
            .map(|_| r.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let mut pos: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
        pos[0] = true;
        pos[1] = false;
        let got = binary_auc(&scores, &pos).ok_or("AUC undefined")?;
        let want = oracle(&scores, &pos);
        ensure(got == want, || format!("trial {t}: AUC {got} != oracle {want}"))?;

        let classes = 3;
        let truth: Vec<usize> = (0..n)
            .map(|i| if i < classes { i } else { r.random_range(0..classes) })
            .collect();
        let probs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..classes).map(|_| r.random_range(0..levels) as f64).collect())
            .collect();
        let multi = roc_auc(&truth, &probs, classes).map_err(|e| e.to_string())?;
        for c in 0..classes {
            let s: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let p: Vec<bool> = truth.iter().map(|&y| y == c).collect();
            if p.iter().all(|&x| x) {
                continue;
            }
            ensure(multi.per_class[c] == Some(oracle(&s, &p)), || {
                format!("trial {t}: one-vs-rest class {c}")
            })?;
        }
    }
    Ok("20 matrices within 1e-12; 100 AUCs equal the all-pairs oracle exactly".into())
}

pub struct E2e {
    pub accuracy: f64,
    pub iou: f64,
    pub worst_sum_error: f64,
    pub elapsed: Duration,
}

fn run_e2e(root: &Path, seed: u64) -> Result<E2e, String> {
    let t0 = Instant::now();
    let s = |e: lulc_core::LulcError| e.to_string();
    let mut synth_cfg = PipelineConfig::parse(&format!("version = 1\nseed = {seed}\n")).map_err(s)?;
    synth_cfg.output_dir = root.to_path_buf();
    let data = cmd_synth(&synth_cfg).map_err(s)?;
    let mut cfg = PipelineConfig::load(root.join("lulc.toml")).map_err(s)?;
    cfg.train.models = vec!["cnn".into()];
    cfg.train.folds = 0;
    cmd_composite(&cfg).map_err(s)?;
    let summary = cmd_train(&cfg).map_err(s)?;
    let maps = cmd_classify(&cfg, None).map_err(s)?;
    ensure(maps.len() == 3, || format!("{} class maps, expected 3", maps.len()))?;
    let product = cmd_change(&cfg).map_err(s)?;
    let iou = expansion_iou(&product.expansion, &data.expansion).map_err(s)?;
    let worst_sum_error = product
        .proportions
        .iter()
        .map(|p| (p.shares.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(E2e {
        accuracy: summary.outcomes[0].report.overall_accuracy,
        iou,
        worst_sum_error,
        elapsed: t0.elapsed(),
    })
}

fn criterion_10(root: &Path) -> Outcome {
    let e = run_e2e(root, 2024)?;
    ensure(e.accuracy >= 0.95, || format!("test accuracy {:.4}", e.accuracy))?;
    ensure(e.iou >= 0.90, || format!("expansion IoU {:.4}", e.iou))?;
    ensure(e.worst_sum_error <= 1e-12, || {
        format!("proportions off by {:e}", e.worst_sum_error)
    })?;
    within(e.elapsed, 300.0)?;
    Ok(format!(
        "accuracy {:.4}, IoU {:.4}, max |sum-1| {:.1e}, {:.1}s",
        e.accuracy,
        e.iou,
        e.worst_sum_error,
        e.elapsed.as_secs_f64()
    ))
}

const TABLE_OVERRIDES: &str = r#"
[train]
models = ["all"]
folds = 10

[train.cnn]
max_epochs = 4
patience = 2

[train.ann]
max_epochs = 4
patience = 2

[train.rf]
n_estimators = 20

[sweep]
model = "cnn"
"#;

fn run_tables(root: &Path, seed: u64) -> Result<(), String> {
    let s = |e: lulc_core::LulcError| e.to_string();
    std::fs::create_dir_all(root).map_err(|e| e.to_string())?;
    let synth_toml = root.join("synth.toml");
    std::fs::write(
        &synth_toml,
        format!("version = 1\nseed = {seed}\noutput_dir = \".\"\n\n[synth]\nlabels_per_class = 300\n"),
    )
    .map_err(|e| e.to_string())?;
    cmd_synth(&PipelineConfig::load(&synth_toml).map_err(s)?).map_err(s)?;
    let generated = std::fs::read_to_string(root.join("lulc.toml")).map_err(|e| e.to_string())?;
    let tables_toml = root.join("tables.toml");
    std::fs::write(&tables_toml, generated + TABLE_OVERRIDES).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::load(&tables_toml).map_err(s)?;
    cmd_composite(&cfg).map_err(s)?;
    cmd_train(&cfg).map_err(s)?;
    cmd_sweep(&cfg).map_err(s)?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

fn numeric(cell: &str) -> bool {
    cell.parse::<f64>().is_ok_and(f64::is_finite)
}

fn criterion_11(root: &Path) -> Outcome {
    run_tables(root, 7)?;
    let out = root.join("run");

    let sweep = read_csv(&out.join("sweep/sweep.csv"))?;
    ensure(
        sweep[0] == ["sample_size", "accuracy", "precision", "recall", "f1_score"],
        || format!("sweep header {:?}", sweep[0]),
    )?;
    let sizes: Vec<&str> = sweep[1..].iter().map(|r| r[0].as_str()).collect();
    ensure(sizes == ["490", "700", "1050", "1400", "1750"], || {
        format!("sweep sizes {sizes:?}")
    })?;
    ensure(
        sweep[1..]
            .iter()
            .all(|r| r.len() == 5 && r[1..].iter().all(|c| numeric(c))),
        || "sweep rows malformed".into(),
    )?;

    let cv = read_csv(&out.join("train/cv_table.csv"))?;
    ensure(cv[0] == ["fold", "CNN", "RF", "ANN"], || {
        format!("cv header {:?}", cv[0])
    })?;
    let first: Vec<String> = cv[1..].iter().map(|r| r[0].clone()).collect();
    let want: Vec<String> = (1..=10)
        .map(|i| i.to_string())
        .chain(["Mean".into(), "Std".into()])
        .collect();
    ensure(first == want, || format!("cv rows {first:?}"))?;
    ensure(
        cv[1..]
            .iter()
            .all(|r| r.len() == 4 && r[1..].iter().all(|c| numeric(c))),
        || "cv rows malformed".into(),
    )?;

    let cmp = read_csv(&out.join("train/comparison.csv"))?;
    ensure(
        cmp[0] == ["model", "accuracy", "precision", "recall", "f1_score"],
        || format!("comparison header {:?}", cmp[0]),
    )?;
    let models: Vec<&str> = cmp[1..].iter().map(|r| r[0].as_str()).collect();
    ensure(models == ["CNN", "RF", "ANN"], || format!("comparison rows {models:?}"))?;
    ensure(
        cmp[1..]
            .iter()
            .all(|r| r.len() == 5 && r[1..].iter().all(|c| numeric(c))),
        || "comparison rows malformed".into(),
    )?;
    for m in ["cnn", "rf", "ann"] {
        ensure(out.join(format!("train/{m}/model.lkm1")).is_file(), || {
            format!("{m} model missing")
        })?;
    }
    Ok("sweep 5x5, cv table 12 rows x (fold,CNN,RF,ANN), comparison 3 rows x 5".into())
}

fn collect_files(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, base, out)?;
        } else {
            out.insert(path.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&path)?);
        }
    }
    Ok(())
}

fn criterion_12(first_e2e: &Path, first_tables: &Path, scratch: &Path) -> Outcome {
    let again_e2e = scratch.join("e2e");
    let again_tables = scratch.join("tables");
    run_e2e(&again_e2e, 2024)?;
    run_tables(&again_tables, 7)?;
    let mut compared = 0;
    for (a, b) in [(first_e2e, &again_e2e), (first_tables, &again_tables)] {
        let (mut fa, mut fb) = (BTreeMap::new(), BTreeMap::new());
        collect_files(a, a, &mut fa).map_err(|e| e.to_string())?;
        collect_files(b, b, &mut fb).map_err(|e| e.to_string())?;
        ensure(fa.keys().eq(fb.keys()), || {
            format!("file sets differ under {}", a.display())
        })?;
        for (name, bytes) in &fa {
            ensure(fb[name] == *bytes, || {
                format!("{} differs between runs", name.display())
            })?;
            compared += 1;
        }
    }
    Ok(format!("{compared} artifacts byte-identical across reruns"))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let e2e = scratch.path().join("first/e2e");
    let tables = scratch.path().join("first/tables");
    let again = scratch.path().join("again");

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("median composite oracle", Box::new(criterion_1)),
        ("QA masking", Box::new(criterion_2)),
        ("index math", Box::new(criterion_3)),
        ("chip census", Box::new(criterion_4)),
        ("sample-size rules", Box::new(criterion_5)),
        ("k-means", Box::new(criterion_6)),
        ("forest vote equivalence", Box::new(criterion_7)),
        ("gradient checks", Box::new(criterion_8)),
        ("metrics oracle", Box::new(criterion_9)),
        ("end-to-end synthetic run", Box::new(|| criterion_10(&e2e))),
        ("report table shapes", Box::new(|| criterion_11(&tables))),
        ("determinism", Box::new(|| criterion_12(&e2e, &tables, &again))),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
