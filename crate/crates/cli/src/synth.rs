//! Seeded synthetic scenes with planted classes, clouds and urban growth.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use lulc_core::change::{urban_expansion, ClassMap, ExpansionMap};
use lulc_core::dataset::{write_labels_csv, ClassScheme, LabeledPoint};
use lulc_core::raster::{write_geotiff, Band, GeoRef, Raster};
use lulc_core::{seed, LulcError, Result};

use crate::config::SynthSection;

pub const URBAN: usize = 0;
pub const GRASS: usize = 1;
pub const FOREST: usize = 2;
pub const BARE: usize = 3;
pub const WATER: usize = 4;
pub const COASTAL: usize = 5;
pub const WETLAND: usize = 6;

/// File names of the reflectance bands and the QA band.
pub const SCENE_BANDS: [&str; 7] = ["SR_B1", "SR_B2", "SR_B3", "SR_B4", "SR_B5", "SR_B6", "SR_B7"];
pub const QA_BAND: &str = "QA_PIXEL";

const QA_DILATED: u16 = 1 << 1;
const QA_CLOUD: u16 = 1 << 3;
const QA_SHADOW: u16 = 1 << 4;
const QA_CLEAR: u16 = 1 << 6;

/// Mean surface reflectance per class over coastal..swir2.
pub const SIGNATURES: [[f64; 7]; 7] = [
    [0.10, 0.12, 0.13, 0.15, 0.20, 0.26, 0.24],
    [0.04, 0.05, 0.09, 0.07, 0.38, 0.22, 0.12],
    [0.02, 0.03, 0.06, 0.03, 0.46, 0.18, 0.08],
    [0.14, 0.18, 0.24, 0.30, 0.34, 0.42, 0.36],
    [0.06, 0.07, 0.06, 0.04, 0.02, 0.01, 0.01],
    [0.09, 0.11, 0.15, 0.13, 0.10, 0.06, 0.04],
    [0.04, 0.05, 0.08, 0.06, 0.24, 0.10, 0.05],
];

const CLOUD_REFLECTANCE: f64 = 0.6;
const SHADOW_FACTOR: f64 = 0.3;

pub struct SynthData {
    pub geo: GeoRef,
    pub scheme: ClassScheme,
    pub scenes: Vec<(NaiveDate, Raster)>,
    /// Ground-truth class map per year.
    pub truth: Vec<ClassMap>,
    pub expansion: ExpansionMap,
    pub labels: Vec<LabeledPoint>,
}

fn frac(n: usize, num: usize) -> usize {
    (n * num + 32) / 64
}

/// Class of each pixel with no urban cover.
fn base_classes(w: usize, h: usize) -> Vec<usize> {
    let (c1, c2, c3) = (frac(w, 8), frac(w, 11), frac(w, 19));
    let (r1, r2) = (frac(h, 20), frac(h, 40));
    let mut out = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            out.push(if col < c1 {
                WATER
            } else if col < c2 {
                COASTAL
            } else if col < c3 {
                WETLAND
            } else if row < r1 {
                FOREST
            } else if row < r2 {
                GRASS
            } else {
                BARE
            });
        }
    }
    out
}

/// Land pixels ordered by distance from the growth center, ties by row then column.
fn growth_order(w: usize, h: usize) -> Vec<usize> {
    let land_from = frac(w, 19);
    let (cx, cy) = (frac(w, 45) as i64, frac(h, 48) as i64);
    let mut cells: Vec<(i64, usize)> = (0..h)
        .flat_map(|row| (land_from..w).map(move |col| (row, col)))
        .map(|(row, col)| {
            let (dx, dy) = (col as i64 - cx, row as i64 - cy);
            (dx * dx + dy * dy, row * w + col)
        })
        .collect();
    cells.sort_unstable();
    cells.into_iter().map(|(_, i)| i).collect()
}

fn validate(cfg: &SynthSection) -> Result<()> {
    let bad = |m: String| Err(LulcError::Config(format!("synth.{m}")));
    if cfg.width < 32 || cfg.height < 32 {
        return bad(format!(
            "width/height: at least 32 pixels, got {}x{}",
            cfg.width, cfg.height
        ));
    }
    if cfg.years.len() < 2 || cfg.years.windows(2).any(|p| p[1] <= p[0]) {
        return bad("years: need at least two increasing years".into());
    }
    if cfg.scenes_per_year == 0 || cfg.scenes_per_year > 12 {
        return bad(format!("scenes_per_year: 1..=12, got {}", cfg.scenes_per_year));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return bad(format!("noise: must be non-negative, got {}", cfg.noise));
    }
    let land = cfg.height * (cfg.width - frac(cfg.width, 19));
    let final_urban = cfg.urban_start + cfg.urban_growth * (cfg.years.len() - 1);
    if cfg.urban_start == 0 || final_urban > land / 2 {
        return bad(format!(
            "urban_start/urban_growth: final urban area {final_urban} exceeds half the land ({land})"
        ));
    }
    Ok(())
}

/// Generates every fixture in memory.
pub fn generate(cfg: &SynthSection, master: u64) -> Result<SynthData> {
    validate(cfg)?;
    let (w, h) = (cfg.width, cfg.height);
    let n = w * h;
    let scheme = ClassScheme::default();
    let geo = GeoRef::new("EPSG:4326", (177.40, -17.70), (0.00027, -0.00027))?;
    let base = base_classes(w, h);
    let order = growth_order(w, h);

    let mut truth = Vec::with_capacity(cfg.years.len());
    for (i, &year) in cfg.years.iter().enumerate() {
        let mut cells = base.clone();
        for &p in &order[..cfg.urban_start + i * cfg.urban_growth] {
            cells[p] = URBAN;
        }
        truth.push(ClassMap::new(
            year,
            w,
            h,
            cells.into_iter().map(Some).collect(),
            geo.clone(),
            scheme.clone(),
        )?);
    }
    let expansion = urban_expansion(&truth, URBAN)?;

    let noise = Normal::new(0.0, cfg.noise).map_err(|e| LulcError::Config(format!("synth.noise: {e}")))?;
    let mut scenes = Vec::new();
    for (yi, &year) in cfg.years.iter().enumerate() {
        let classes: Vec<usize> = truth[yi].cells.iter().map(|c| c.expect("truth is complete")).collect();
        let mut qas: Vec<Vec<u16>> = (0..cfg.scenes_per_year)
            .map(|s| {
                plant_clouds(
                    w,
                    h,
                    cfg.clouds_per_scene,
                    &mut seed::rng(master, &format!("synth/clouds/{year}/{s}")),
                )
            })
            .collect();
        // every pixel needs one clear observation per year
        for p in 0..n {
            if qas.iter().all(|q| q[p] & (QA_CLOUD | QA_SHADOW | QA_DILATED) != 0) {
                let s = p % cfg.scenes_per_year;
                qas[s][p] = QA_CLEAR;
            }
        }
        for (s, qa) in qas.into_iter().enumerate() {
            let month = 1 + (s * 12 / cfg.scenes_per_year) as u32;
            let date = NaiveDate::from_ymd_opt(year, month, 15)
                .ok_or_else(|| LulcError::Config(format!("synth.years: {year} out of range")))?;
            let mut rng = seed::rng(master, &format!("synth/noise/{date}"));
            let mut bands: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 7];
            for p in 0..n {
                let sig = &SIGNATURES[classes[p]];
                for (b, values) in bands.iter_mut().enumerate() {
                    let clean = (sig[b] + noise.sample(&mut rng)).max(0.0);
                    values.push(if qa[p] & QA_CLOUD != 0 {
                        CLOUD_REFLECTANCE
                    } else if qa[p] & QA_SHADOW != 0 {
                        clean * SHADOW_FACTOR
                    } else {
                        clean
                    });
                }
            }
            let mut out: Vec<Band> = SCENE_BANDS
                .iter()
                .zip(bands)
                .map(|(name, values)| Band::new(*name, values))
                .collect();
            out.push(Band::new(QA_BAND, qa.iter().map(|&q| q as f64).collect()));
            scenes.push((date, Raster::from_bands(w, h, out, geo.clone())?));
        }
    }

    let last = truth.last().expect("at least two years");
    let final_year = last.year;
    let mut labels = Vec::new();
    for class in 0..scheme.len() {
        let mut pixels: Vec<usize> = (0..n).filter(|&p| last.cells[p] == Some(class)).collect();
        pixels.shuffle(&mut seed::rng(master, &format!("synth/labels/class{class}")));
        let want = if class == COASTAL {
            cfg.rare_class_labels
        } else {
            cfg.labels_per_class
        };
        pixels.truncate(want);
        pixels.sort_unstable();
        labels.extend(pixels.into_iter().map(|p| LabeledPoint {
            col: p % w,
            row: p / w,
            class_id: class,
            year: final_year,
            source: "synth".into(),
        }));
    }

    Ok(SynthData {
        geo,
        scheme,
        scenes,
        truth,
        expansion,
        labels,
    })
}

fn plant_clouds(w: usize, h: usize, count: usize, rng: &mut impl Rng) -> Vec<u16> {
    let mut qa = vec![QA_CLEAR; w * h];
    for _ in 0..count {
        let r = rng.random_range(3..=6) as i64;
        let cx = rng.random_range(0..w) as i64;
        let cy = rng.random_range(0..h) as i64;
        let (sx, sy) = (cx + r + 2, cy + r + 2);
        for row in 0..h as i64 {
            for col in 0..w as i64 {
                let p = (row as usize) * w + col as usize;
                let d2 = (col - cx).pow(2) + (row - cy).pow(2);
                let s2 = (col - sx).pow(2) + (row - sy).pow(2);
                if d2 <= r * r {
                    qa[p] = (qa[p] & !QA_CLEAR) | QA_CLOUD;
                } else if d2 <= (r + 1) * (r + 1) {
                    qa[p] = (qa[p] & !QA_CLEAR) | QA_DILATED;
                } else if s2 <= r * r && qa[p] & QA_CLOUD == 0 {
                    qa[p] = (qa[p] & !QA_CLEAR) | QA_SHADOW;
                }
            }
        }
    }
    qa
}

pub fn scene_file_name(date: NaiveDate) -> String {
    format!("scene_{date}.tif")
}

/// Writes scenes, labels, truth maps and a ready-to-run `lulc.toml` under `dir`.
pub fn write_fixtures(data: &SynthData, dir: &Path, master: u64) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| LulcError::io(p, e));
    let scenes_dir = dir.join("scenes");
    let truth_dir = dir.join("truth");
    mkdir(&scenes_dir)?;
    mkdir(&truth_dir)?;
    for (date, raster) in &data.scenes {
        write_geotiff(raster, scenes_dir.join(scene_file_name(*date)))?;
    }
    for map in &data.truth {
        map.write_geotiff(truth_dir.join(format!("truth_{}.tif", map.year)))?;
    }
    data.expansion.write_geotiff(truth_dir.join("expansion.tif"))?;
    write_labels_csv(dir.join("labels.csv"), &data.labels, &data.geo, &data.scheme)?;

    let label_year = data.truth.last().map(|m| m.year).unwrap_or_default();
    let mut toml = String::new();
    let _ = writeln!(toml, "version = 1\nseed = {master}\noutput_dir = \"run\"\n");
    toml.push_str("[bands]\n");
    for (logical, file) in crate::config::REFLECTANCE_BANDS.iter().zip(SCENE_BANDS) {
        let _ = writeln!(toml, "{logical} = \"{file}\"");
    }
    let _ = writeln!(toml, "qa = \"{QA_BAND}\"\n");
    toml.push_str("[dataset]\nlabels = \"labels.csv\"\n");
    let _ = writeln!(toml, "label_year = {label_year}\n");
    toml.push_str("[composite]\n");
    for (date, _) in &data.scenes {
        let _ = writeln!(
            toml,
            "[[composite.scenes]]\npath = \"scenes/{}\"\ndate = \"{date}\"",
            scene_file_name(*date)
        );
    }
    let path = dir.join("lulc.toml");
    std::fs::write(&path, toml).map_err(|e| LulcError::io(&path, e))
}
