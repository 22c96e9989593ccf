use std::collections::BTreeSet;

use lulc_core::dataset::{
    build_labeled_set, extract_chip, upsample_class, Chip, ChipDataset, ClassScheme, LabeledPoint, SplitConfig,
    SplitTag, UnderfullPolicy,
};
use lulc_core::raster::{Band, GeoRef, Raster};
use proptest::prelude::*;

const W: usize = 12;
const H: usize = 10;

fn raster(mask: Vec<bool>) -> Raster {
    let geo = GeoRef::new("EPSG:32637", (0.0, 0.0), (30.0, -30.0)).unwrap();
    let a = (0..W * H).map(|i| i as f64).collect();
    let b = (0..W * H).map(|i| -(i as f64) * 0.5).collect();
    Raster::new(W, H, vec![Band::new("a", a), Band::new("b", b)], mask, geo).unwrap()
}

fn scheme(n: usize) -> ClassScheme {
    let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    ClassScheme::from_names(&names, &vec![[0, 0, 0]; n]).unwrap()
}

/// Edge-clamped neighbourhood, masked neighbours replaced by the center.
fn chip_oracle(r: &Raster, col: usize, row: usize, size: usize) -> Vec<f64> {
    let h = (size / 2) as i64;
    let mut out = Vec::new();
    for dy in -h..=h {
        for dx in -h..=h {
            let y = (row as i64 + dy).clamp(0, H as i64 - 1) as usize;
            let x = (col as i64 + dx).clamp(0, W as i64 - 1) as usize;
            let (x, y) = if r.is_valid(x, y) { (x, y) } else { (col, row) };
            for b in 0..r.band_count() {
                out.push(r.value(b, x, y));
            }
        }
    }
    out
}

fn arb_labels() -> impl Strategy<Value = (Vec<bool>, Vec<(usize, usize)>)> {
    (
        prop::collection::vec(prop::bool::weighted(0.9), W * H),
        prop::collection::vec((0..W, 0..H), 20..80),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chips_match_oracle(mask in prop::collection::vec(prop::bool::weighted(0.8), W * H), col in 0..W, row in 0..H, half in 0usize..4) {
        let r = raster(mask);
        let size = 2 * half + 1;
        let chip = extract_chip(&r, (col, row), size).unwrap();
        prop_assert_eq!(chip.data, chip_oracle(&r, col, row, size));
    }

    #[test]
    fn split_is_disjoint_and_sized((mask, pts) in arb_labels(), train in 1usize..8, test in 0usize..5, seed in any::<u64>()) {
        let r = raster(mask);
        // class by column parity keeps every class populated
        let points: Vec<LabeledPoint> = pts
            .iter()
            .map(|&(col, row)| LabeledPoint { col, row, class_id: col % 2, year: 2022, source: "t".into() })
            .collect();
        let cfg = SplitConfig { per_class_train: train, per_class_test: test, chip_size: 3, underfull: UnderfullPolicy::Upsample, seed };
        let split = match build_labeled_set(&r, &points, &scheme(2), &cfg) {
            Ok(s) => s,
            Err(lulc_core::LulcError::MissingClass(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let train_px: BTreeSet<_> = split.train.chips.iter().map(|c| c.center).collect();
        let test_px: Vec<_> = split.test.chips.iter().map(|c| c.center).collect();
        let test_set: BTreeSet<_> = test_px.iter().copied().collect();
        prop_assert_eq!(test_set.len(), test_px.len());
        prop_assert!(train_px.is_disjoint(&test_set));
        prop_assert!(split.train.chips.iter().chain(&split.test.chips).all(|c| r.is_valid(c.center.0, c.center.1)));
        for c in 0..2 {
            let n_train = split.train.chips.iter().filter(|ch| ch.label == Some(c)).count();
            let n_test = split.test.chips.iter().filter(|ch| ch.label == Some(c)).count();
            prop_assert_eq!(n_train, train.max(n_train));
            prop_assert!(n_test <= test);
        }
        for ch in split.train.chips.iter().chain(&split.test.chips) {
            prop_assert_eq!(&ch.data, &chip_oracle(&r, ch.center.0, ch.center.1, 3));
            prop_assert_eq!(ch.label, Some(ch.center.0 % 2));
        }
        let again = build_labeled_set(&r, &points, &scheme(2), &cfg).unwrap();
        prop_assert_eq!(again.train.chips, split.train.chips);
    }

    #[test]
    fn upsampling_only_duplicates(n0 in 1usize..10, n1 in 1usize..10, target in 0usize..25, seed in any::<u64>()) {
        let r = raster(vec![true; W * H]);
        let chips: Vec<Chip> = (0..n0 + n1)
            .map(|i| {
                let mut c = extract_chip(&r, (i % W, i / W), 3).unwrap();
                c.label = Some(usize::from(i >= n0));
                c
            })
            .collect();
        let ds = ChipDataset::new(chips, 3, 2, SplitTag::Train).unwrap();
        let up = upsample_class(&ds, 1, target, seed).unwrap();
        if target <= n1 {
            prop_assert_eq!(&up.chips, &ds.chips);
        } else {
            prop_assert_eq!(up.class_counts(2), vec![n0, target]);
            prop_assert_eq!(&up.chips[..ds.len()], &ds.chips[..]);
            prop_assert!(up.chips[ds.len()..].iter().all(|c| ds.chips[n0..].contains(c)));
        }
    }
}

#[test]
fn underfull_class_reports_and_never_duplicates_test() {
    let r = raster(vec![true; W * H]);
    let mut points: Vec<LabeledPoint> = (0..40)
        .map(|i| LabeledPoint {
            col: i % W,
            row: i / W,
            class_id: 0,
            year: 2022,
            source: "t".into(),
        })
        .collect();
    points.extend((0..5).map(|i| LabeledPoint {
        col: i,
        row: 9,
        class_id: 1,
        year: 2022,
        source: "t".into(),
    }));
    let cfg = SplitConfig {
        per_class_train: 14,
        per_class_test: 6,
        chip_size: 3,
        underfull: UnderfullPolicy::Upsample,
        seed: 4,
    };
    let split = build_labeled_set(&r, &points, &scheme(2), &cfg).unwrap();
    assert_eq!(split.underfull.len(), 1);
    let u = &split.underfull[0];
    assert_eq!(
        (u.class_id, u.available, u.train + u.test, u.upsampled_to),
        (1, 5, 5, Some(14))
    );
    assert_eq!(split.train.class_counts(2), vec![14, 14]);
    assert_eq!(split.test.class_counts(2), vec![6, u.test]);

    let warn = build_labeled_set(
        &r,
        &points,
        &scheme(2),
        &SplitConfig {
            underfull: UnderfullPolicy::Warn,
            ..cfg
        },
    )
    .unwrap();
    assert_eq!(warn.train.class_counts(2), vec![14, u.train]);
}

#[test]
fn absent_class_is_reported() {
    let r = raster(vec![true; W * H]);
    let points = vec![LabeledPoint {
        col: 0,
        row: 0,
        class_id: 0,
        year: 2022,
        source: "t".into(),
    }];
    let err = build_labeled_set(&r, &points, &scheme(3), &SplitConfig::default()).unwrap_err();
    assert!(matches!(err, lulc_core::LulcError::MissingClass(1)));
}
