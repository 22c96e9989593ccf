//! Labelled point files. CSV columns are `lon, lat, class_name, year` with an
//! optional `source`; GeoJSON is a FeatureCollection of Point features whose
//! properties carry `class_name` (or `class`) and `year`.

use std::path::Path;

use serde::Deserialize;

use super::{ClassScheme, LabeledPoint};
use crate::error::{LulcError, Result};
use crate::raster::GeoRef;

#[derive(Debug, Deserialize)]
struct CsvRow {
    lon: f64,
    lat: f64,
    class_name: String,
    year: i32,
    #[serde(default)]
    source: Option<String>,
}

fn to_point(
    geo: &GeoRef,
    (width, height): (usize, usize),
    scheme: &ClassScheme,
    (lon, lat): (f64, f64),
    class_name: &str,
    year: i32,
    source: String,
) -> Result<LabeledPoint> {
    let class_id = scheme
        .id_of(class_name)
        .ok_or_else(|| LulcError::Config(format!("unknown class '{class_name}'")))?;
    let (col, row) = geo.pixel_of(lon, lat);
    if col < 0 || row < 0 || col as usize >= width || row as usize >= height {
        return Err(LulcError::Bounds(format!(
            "label at ({lon}, {lat}) falls outside the raster"
        )));
    }
    Ok(LabeledPoint {
        col: col as usize,
        row: row as usize,
        class_id,
        year,
        source,
    })
}

fn default_source(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn read_labels_csv(
    path: impl AsRef<Path>,
    geo: &GeoRef,
    shape: (usize, usize),
    scheme: &ClassScheme,
) -> Result<Vec<LabeledPoint>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let fallback = default_source(path);
    let mut out = Vec::new();
    for (line, row) in reader.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let source = row.source.filter(|s| !s.is_empty()).unwrap_or_else(|| fallback.clone());
        let p = to_point(
            geo,
            shape,
            scheme,
            (row.lon, row.lat),
            &row.class_name,
            row.year,
            source,
        )
        .map_err(|e| LulcError::Config(format!("{}: row {}: {e}", path.display(), line + 2)))?;
        out.push(p);
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> LulcError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => LulcError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        LulcError::Format(format!("{}: {e}", path.display()))
    }
}

pub fn read_labels_geojson(
    path: impl AsRef<Path>,
    geo: &GeoRef,
    shape: (usize, usize),
    scheme: &ClassScheme,
) -> Result<Vec<LabeledPoint>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| LulcError::io(path, e))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| LulcError::Format(format!("{}: {e}", path.display())))?;
    let bad = |msg: String| LulcError::Format(format!("{}: {msg}", path.display()));
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| bad("expected a FeatureCollection".into()))?;
    let fallback = default_source(path);
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let geom = &f["geometry"];
        if geom["type"] != "Point" {
            return Err(bad(format!("feature {i} is not a Point")));
        }
        let coords = geom["coordinates"]
            .as_array()
            .filter(|c| c.len() >= 2)
            .ok_or_else(|| bad(format!("feature {i} has no coordinates")))?;
        let lon = coords[0].as_f64().ok_or_else(|| bad(format!("feature {i}: bad lon")))?;
        let lat = coords[1].as_f64().ok_or_else(|| bad(format!("feature {i}: bad lat")))?;
        let props = &f["properties"];
        let class_name = props["class_name"]
            .as_str()
            .or_else(|| props["class"].as_str())
            .ok_or_else(|| bad(format!("feature {i} has no class_name")))?;
        let year = props["year"]
            .as_i64()
            .ok_or_else(|| bad(format!("feature {i} has no integer year")))? as i32;
        let source = props["source"]
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| fallback.clone());
        out.push(to_point(geo, shape, scheme, (lon, lat), class_name, year, source)?);
    }
    Ok(out)
}

/// Dispatches on extension: `.geojson`/`.json` or CSV otherwise.
pub fn read_labels(
    path: impl AsRef<Path>,
    geo: &GeoRef,
    shape: (usize, usize),
    scheme: &ClassScheme,
) -> Result<Vec<LabeledPoint>> {
    let path = path.as_ref();
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("geojson") | Some("json") => read_labels_geojson(path, geo, shape, scheme),
        _ => read_labels_csv(path, geo, shape, scheme),
    }
}

/// Writes points as CSV with pixel-center coordinates.
pub fn write_labels_csv(
    path: impl AsRef<Path>,
    points: &[LabeledPoint],
    geo: &GeoRef,
    scheme: &ClassScheme,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["lon", "lat", "class_name", "year", "source"])
        .map_err(|e| csv_err(path, e))?;
    for p in points {
        let (lon, lat) = geo.pixel_center(p.col, p.row);
        let name = &scheme.get(p.class_id).ok_or(LulcError::MissingClass(p.class_id))?.name;
        w.write_record([
            format!("{lon:.12}"),
            format!("{lat:.12}"),
            name.clone(),
            p.year.to_string(),
            p.source.clone(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LulcError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let geo = GeoRef::new("EPSG:4326", (177.0, -17.0), (0.001, -0.001)).unwrap();
        let scheme = ClassScheme::default();
        let pts = vec![
            LabeledPoint {
                col: 3,
                row: 7,
                class_id: 5,
                year: 2016,
                source: "survey".into(),
            },
            LabeledPoint {
                col: 0,
                row: 0,
                class_id: 0,
                year: 2014,
                source: "survey".into(),
            },
        ];
        write_labels_csv(&path, &pts, &geo, &scheme).unwrap();
        assert_eq!(read_labels(&path, &geo, (10, 10), &scheme).unwrap(), pts);
    }

    #[test]
    fn geojson_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.geojson");
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Point","coordinates":[0.5,-1.5]},
             "properties":{"class_name":"Forest","year":2020}}]}"#;
        std::fs::write(&path, doc).unwrap();
        let geo = GeoRef::new("EPSG:4326", (0.5, -0.5), (1.0, -1.0)).unwrap();
        let pts = read_labels(&path, &geo, (4, 4), &ClassScheme::default()).unwrap();
        assert_eq!((pts[0].col, pts[0].row, pts[0].class_id, pts[0].year), (0, 1, 2, 2020));
        assert_eq!(pts[0].source, "labels.geojson");
    }

    #[test]
    fn unknown_class_and_outside_point() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        let geo = GeoRef::new("EPSG:4326", (0.0, 0.0), (1.0, -1.0)).unwrap();
        std::fs::write(&path, "lon,lat,class_name,year\n0,0,Glacier,2020\n").unwrap();
        assert!(read_labels(&path, &geo, (2, 2), &ClassScheme::default()).is_err());
        std::fs::write(&path, "lon,lat,class_name,year\n9,0,Forest,2020\n").unwrap();
        assert!(read_labels(&path, &geo, (2, 2), &ClassScheme::default()).is_err());
    }
}
