use lulc_core::change::{class_proportions, transition_matrix, urban_expansion, ClassMap, ExpansionCell};
use lulc_core::dataset::ClassScheme;
use lulc_core::evaluate::{adjusted_rand_index, binary_auc, confusion, mean_std, metrics, roc_auc, stratified_folds};
use lulc_core::raster::GeoRef;
use proptest::prelude::*;

/// Pairwise probability that a positive outscores a negative, ties counting half.
fn auc_oracle(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &p) in positive.iter().enumerate() {
        for (j, &n) in positive.iter().enumerate() {
            if p && !n {
                pairs += 1.0;
                wins += match scores[i].total_cmp(&scores[j]) {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

fn scheme(n: usize) -> ClassScheme {
    let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    ClassScheme::from_names(&names, &vec![[9, 9, 9]; n]).unwrap()
}

fn map(year: i32, cells: Vec<Option<usize>>, n_classes: usize) -> ClassMap {
    let geo = GeoRef::new("EPSG:32637", (0.0, 0.0), (30.0, -30.0)).unwrap();
    let w = cells.len();
    ClassMap::new(year, w, 1, cells, geo, scheme(n_classes)).unwrap()
}

fn arb_series() -> impl Strategy<Value = Vec<Vec<Option<usize>>>> {
    (2usize..5, 1usize..30).prop_flat_map(|(years, n)| {
        prop::collection::vec(prop::collection::vec(prop::option::weighted(0.85, 0usize..4), n), years)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn auc_matches_pairwise_oracle(pts in prop::collection::vec((0u8..6, any::<bool>()), 0..40)) {
        let scores: Vec<f64> = pts.iter().map(|p| p.0 as f64 / 5.0).collect();
        let pos: Vec<bool> = pts.iter().map(|p| p.1).collect();
        match (binary_auc(&scores, &pos), auc_oracle(&scores, &pos)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn folds_partition_and_stratify(labels in prop::collection::vec(0usize..4, 10..120), k in 2usize..11, seed in any::<u64>()) {
        prop_assume!(labels.len() >= k);
        let folds = stratified_folds(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for c in 0..4 {
            let per: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == c).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(stratified_folds(&labels, k, seed).unwrap(), folds);
    }

    #[test]
    fn metrics_match_counting_oracle(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60)) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let r = metrics(&confusion(&truth, &pred, 3).unwrap()).unwrap();
        let n = pairs.len() as f64;
        prop_assert!((r.overall_accuracy - pairs.iter().filter(|p| p.0 == p.1).count() as f64 / n).abs() < 1e-15);
        for (k, m) in r.per_class.iter().enumerate() {
            let tp = pairs.iter().filter(|p| p.0 == k && p.1 == k).count() as f64;
            let fp = pairs.iter().filter(|p| p.0 != k && p.1 == k).count() as f64;
            let fn_ = pairs.iter().filter(|p| p.0 == k && p.1 != k).count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rc = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            prop_assert!((m.precision - p).abs() < 1e-15);
            prop_assert!((m.recall - rc).abs() < 1e-15);
            prop_assert_eq!(m.precision_undefined, tp + fp == 0.0);
            if p + rc > 0.0 {
                prop_assert!((m.f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
            }
            prop_assert!((m.accuracy - (n - fp - fn_) / n).abs() < 1e-15);
        }
    }

    #[test]
    fn ari_is_symmetric_and_label_invariant(a in prop::collection::vec(0usize..4, 2..40), shift in 1usize..4) {
        let b: Vec<usize> = a.iter().rev().copied().collect();
        let ab = adjusted_rand_index(&a, &b).unwrap();
        prop_assert!((ab - adjusted_rand_index(&b, &a).unwrap()).abs() < 1e-12);
        let relabeled: Vec<usize> = a.iter().map(|&x| (x + shift) % 4).collect();
        prop_assert!((adjusted_rand_index(&a, &relabeled).unwrap() - adjusted_rand_index(&a, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn transitions_conserve_pixels(series in arb_series()) {
        let maps: Vec<ClassMap> = series.iter().enumerate().map(|(i, c)| map(2020 + i as i32, c.clone(), 4)).collect();
        for pair in maps.windows(2) {
            let t = transition_matrix(&pair[0], &pair[1]).unwrap();
            let both = pair[0].cells.iter().zip(&pair[1].cells).filter(|(a, b)| a.is_some() && b.is_some()).count();
            prop_assert_eq!(t.iter().sum::<u64>() as usize, both);
            for i in 0..4 {
                let row: u64 = t[i * 4..(i + 1) * 4].iter().sum();
                let from = pair[0].cells.iter().zip(&pair[1].cells).filter(|(a, b)| **a == Some(i) && b.is_some()).count();
                prop_assert_eq!(row as usize, from);
            }
        }
        for s in class_proportions(&maps) {
            if s.classified > 0 {
                prop_assert!((s.shares.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn expansion_matches_scan_oracle(series in arb_series(), urban in 0usize..4) {
        let maps: Vec<ClassMap> = series.iter().enumerate().map(|(i, c)| map(2020 + i as i32, c.clone(), 4)).collect();
        let e = urban_expansion(&maps, urban).unwrap();
        for px in 0..series[0].len() {
            let expect = match series.last().unwrap()[px] {
                None => ExpansionCell::Masked,
                Some(c) if c != urban => ExpansionCell::Never,
                Some(_) => {
                    let first = series.iter().position(|m| m[px] == Some(urban)).unwrap();
                    ExpansionCell::Since(2020 + first as i32)
                }
            };
            prop_assert_eq!(e.cells[px], expect);
        }
    }
}

#[test]
fn roc_excludes_absent_class_from_macro() {
    let truth = [0, 0, 1, 1];
    let probs = vec![
        vec![0.9, 0.1, 0.0],
        vec![0.6, 0.4, 0.0],
        vec![0.3, 0.7, 0.0],
        vec![0.2, 0.8, 0.0],
    ];
    let r = roc_auc(&truth, &probs, 3).unwrap();
    assert_eq!(r.per_class, vec![Some(1.0), Some(1.0), None]);
    assert_eq!(r.excluded, vec![2]);
    assert_eq!(r.macro_auc, 1.0);
}

#[test]
fn mean_std_population() {
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - 1.25f64.sqrt()).abs() < 1e-15);
}
