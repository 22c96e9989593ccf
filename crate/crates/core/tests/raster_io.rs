use std::fs::File;
use std::io::BufWriter;

use lulc_core::raster::{read_geotiff, read_portable, write_geotiff, write_portable, Band, GeoRef, Raster, Window};
use lulc_core::LulcError;
use proptest::prelude::*;
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;

fn geo() -> GeoRef {
    GeoRef::new("EPSG:4326", (177.4012, -17.7521), (0.000269, -0.000269)).unwrap()
}

/// A 3-band u16 GeoTIFF written the way external tools do: chunky RGB
/// samples, PixelIsArea tiepoint at the upper-left corner, nodata 0.
fn write_u16_fixture(path: &std::path::Path, width: u32, height: u32, data: &[u16]) {
    let file = BufWriter::new(File::create(path).unwrap());
    let mut enc = TiffEncoder::new(file).unwrap();
    let mut img = enc.new_image::<colortype::RGB16>(width, height).unwrap();
    let d = img.encoder();
    d.write_tag(Tag::ModelPixelScaleTag, &[0.5f64, 0.5, 0.0][..]).unwrap();
    d.write_tag(Tag::ModelTiepointTag, &[0.0f64, 0.0, 0.0, 10.0, 20.0, 0.0][..])
        .unwrap();
    d.write_tag(
        Tag::GeoKeyDirectoryTag,
        &[1u16, 1, 0, 2, 1024, 0, 1, 2, 2048, 0, 1, 4326][..],
    )
    .unwrap();
    d.write_tag(Tag::GdalNodata, "0").unwrap();
    img.write_data(data).unwrap();
}

#[test]
fn integer_geotiff_nodata_masks_single_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u16.tif");
    let mut data: Vec<u16> = (1..=48).collect();
    // pixel (col 2, row 1) = index 6 → samples 18..21; zero in the first sample only
    data[18] = 0;
    write_u16_fixture(&path, 4, 4, &data);

    let r = read_geotiff(&path).unwrap();
    assert_eq!((r.width(), r.height(), r.band_count()), (4, 4, 3));
    assert_eq!(r.band_names(), vec!["band_1", "band_2", "band_3"]);
    let invalid: Vec<usize> = (0..16).filter(|&i| !r.mask()[i]).collect();
    assert_eq!(invalid, vec![6]);
    assert_eq!(r.value(1, 3, 1), 23.0);
    assert_eq!(r.value(0, 0, 0), 1.0);
    // PixelIsArea corner tiepoint → center of pixel (0,0) is half a pixel in
    assert_eq!(r.geo().origin, (10.25, 19.75));
    assert_eq!(r.geo().pixel_size, (0.5, -0.5));
    assert_eq!(r.geo().crs, "EPSG:4326");
}

#[test]
fn full_size_scene() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.tif");
    let (w, h) = (780, 818);
    let bands = (0..7)
        .map(|b| {
            Band::new(
                format!("b{b}"),
                (0..w * h).map(|i| ((i * 7 + b) % 1000) as f64 / 1000.0).collect(),
            )
        })
        .collect();
    let r = Raster::from_bands(w, h, bands, geo()).unwrap();
    write_geotiff(&r, &path).unwrap();
    let back = read_geotiff(&path).unwrap();
    assert_eq!((back.width(), back.height(), back.band_count()), (780, 818, 7));
    assert_eq!(back.pixel_count(), 638_040);
    assert_eq!(back, r);
}

#[test]
fn truncated_geotiff_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.tif");
    let r = Raster::from_bands(32, 32, vec![Band::new("a", vec![1.0; 1024])], geo()).unwrap();
    write_geotiff(&r, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 3]).unwrap();
    let err = read_geotiff(&path).unwrap_err();
    assert!(matches!(err, LulcError::Io { .. }), "{err:?}");
}

#[test]
fn missing_geotransform_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plain.tif");
    let file = BufWriter::new(File::create(&path).unwrap());
    let mut enc = TiffEncoder::new(file).unwrap();
    enc.write_image::<colortype::Gray8>(2, 2, &[1, 2, 3, 4]).unwrap();
    drop(enc);
    assert!(matches!(read_geotiff(&path), Err(LulcError::Format(_))));
}

#[test]
fn all_masked_raster_writes_only_nodata() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.tif");
    let r = Raster::new(3, 2, vec![Band::new("a", vec![5.0; 6])], vec![false; 6], geo()).unwrap();
    write_geotiff(&r, &path).unwrap();
    let mut dec = tiff::decoder::Decoder::new(File::open(&path).unwrap()).unwrap();
    match dec.read_image().unwrap() {
        tiff::decoder::DecodingResult::F64(v) => assert!(v.iter().all(|x| x.is_nan())),
        other => panic!("unexpected sample type {other:?}"),
    }
    assert_eq!(read_geotiff(&path).unwrap().valid_count(), 0);
}

#[test]
fn unwritable_path_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no/such/dir/out.tif");
    let r = Raster::from_bands(1, 1, vec![Band::new("a", vec![1.0])], geo()).unwrap();
    assert!(matches!(write_geotiff(&r, &path), Err(LulcError::Io { .. })));
    assert!(matches!(write_portable(&r, &path), Err(LulcError::Io { .. })));
}

#[test]
fn unreadable_file_is_io_error() {
    assert!(matches!(read_geotiff("/nonexistent/x.tif"), Err(LulcError::Io { .. })));
}

fn arb_raster() -> impl Strategy<Value = Raster> {
    (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(w, h, nb)| {
        let n = w * h;
        (
            prop::collection::vec(prop::collection::vec(-1e6f64..1e6, n), nb),
            prop::collection::vec(any::<bool>(), n),
            -180.0f64..180.0,
            -90.0f64..90.0,
            1e-5f64..1.0,
        )
            .prop_map(move |(vals, mask, ox, oy, px)| {
                let bands = vals
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let b = Band::new(format!("band{i}"), v);
                        if i == 0 {
                            b.with_wavelength(0.64, 0.67)
                        } else {
                            b
                        }
                    })
                    .collect();
                Raster::new(
                    w,
                    h,
                    bands,
                    mask,
                    GeoRef::new("EPSG:4326", (ox, oy), (px, -px)).unwrap(),
                )
                .unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn geotiff_round_trip(r in arb_raster()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.tif");
        write_geotiff(&r, &path).unwrap();
        let back = read_geotiff(&path).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn portable_round_trip(r in arb_raster()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.lkr");
        write_portable(&r, &path).unwrap();
        let back = read_portable(&path).unwrap();
        prop_assert_eq!(back.mask(), r.mask());
        for (a, b) in back.bands().iter().zip(r.bands()) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(back.geo(), r.geo());
    }

    #[test]
    fn nested_clips_compose(w1 in (0usize..4, 0usize..4, 3usize..6, 3usize..6), w2 in (0usize..2, 0usize..2, 1usize..3, 1usize..3)) {
        let values = (0..100).map(|i| i as f64).collect();
        let r = Raster::from_bands(10, 10, vec![Band::new("v", values)], geo()).unwrap();
        let outer = Window::new(w1.0, w1.1, w1.2, w1.3);
        let inner = Window::new(w2.0, w2.1, w2.2, w2.3);
        let twice = r.clip(outer).unwrap().clip(inner).unwrap();
        let once = r.clip(outer.compose(inner)).unwrap();
        prop_assert_eq!(&twice.bands()[0].values, &once.bands()[0].values);
        prop_assert_eq!(twice.mask(), once.mask());
        // origins agree up to rounding of the two-step translation
        let (a, b) = (twice.geo().origin, once.geo().origin);
        prop_assert!((a.0 - b.0).abs() <= 1e-12 && (a.1 - b.1).abs() <= 1e-12);
    }
}
