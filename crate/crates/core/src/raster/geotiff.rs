//! Baseline GeoTIFF input and output.
//!
//! Reading accepts strip or tiled layouts, chunky or planar samples, the
//! compressions the `tiff` crate decodes, and u8/i8/u16/i16/u32/i32/f32/f64
//! samples. Georeferencing comes from ModelPixelScale + ModelTiepoint or a
//! non-rotated ModelTransformation. Band names and wavelengths round-trip
//! through GDAL metadata (tag 42112); nodata uses tag 42113.
//!
//! Writing always produces uncompressed, planar f64 strips with
//! `RasterPixelIsPoint` georeferencing so that pixel-center coordinates
//! survive bit-exactly, and nodata `nan`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Seek, Write};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::TiffEncoder;
use tiff::tags::{PlanarConfiguration, SampleFormat, Tag};
use tiff::TiffError;

use super::{Band, GeoRef, Raster, DEFAULT_CRS};
use crate::error::{LulcError, Result};

const TAG_GDAL_METADATA: u16 = 42112;

const KEY_MODEL_TYPE: u16 = 1024;
const KEY_RASTER_TYPE: u16 = 1025;
const KEY_CITATION: u16 = 1026;
const KEY_GEOGRAPHIC_TYPE: u16 = 2048;
const KEY_GEOG_CITATION: u16 = 2049;
const KEY_PROJECTED_TYPE: u16 = 3072;

const MODEL_PROJECTED: u16 = 1;
const MODEL_GEOGRAPHIC: u16 = 2;
const PIXEL_IS_AREA: u16 = 1;
const PIXEL_IS_POINT: u16 = 2;
const USER_DEFINED: u16 = 32767;

fn tiff_err(path: &Path, e: TiffError) -> LulcError {
    match e {
        TiffError::IoError(io) => LulcError::io(path, io),
        TiffError::UnsupportedError(u) => LulcError::Format(format!("{}: unsupported TIFF: {u}", path.display())),
        other => LulcError::Format(format!("{}: {other}", path.display())),
    }
}

pub fn read_geotiff(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LulcError::io(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file))
        .map_err(|e| tiff_err(path, e))?
        .with_limits(Limits::unlimited());
    let err = |e| tiff_err(path, e);

    let (width, height) = dec.dimensions().map_err(err)?;
    let (width, height) = (width as usize, height as usize);
    let samples = dec
        .find_tag_unsigned::<u16>(Tag::SamplesPerPixel)
        .map_err(err)?
        .unwrap_or(1) as usize;
    let planar = match dec.find_tag_unsigned::<u16>(Tag::PlanarConfiguration).map_err(err)? {
        Some(2) => PlanarConfiguration::Planar,
        _ => PlanarConfiguration::Chunky,
    };

    let geo = read_georef(&mut dec, path)?;
    let nodata = match dec.find_tag(Tag::GdalNodata).map_err(err)? {
        Some(v) => {
            let s = v.into_string().map_err(err)?;
            Some(parse_nodata(&s).ok_or_else(|| LulcError::Format(format!("unparseable nodata '{s}'")))?)
        }
        None => None,
    };
    let meta = match dec.find_tag(Tag::Unknown(TAG_GDAL_METADATA)).map_err(err)? {
        Some(v) => parse_gdal_metadata(&v.into_string().map_err(err)?),
        None => Vec::new(),
    };

    let mut buf = DecodingResult::U8(Vec::new());
    let layout = dec.read_image_to_buffer(&mut buf).map_err(err)?;
    let values = to_f64(buf)?;
    let n = width * height;
    if values.len() < n * samples {
        return Err(LulcError::Format(format!(
            "decoded {} samples, expected {}x{}x{samples} (planes read: {})",
            values.len(),
            width,
            height,
            layout.planes
        )));
    }

    let mut mask = vec![true; n];
    let mut bands = Vec::with_capacity(samples);
    for s in 0..samples {
        let band_values: Vec<f64> = match planar {
            PlanarConfiguration::Planar => values[s * n..(s + 1) * n].to_vec(),
            _ => values.iter().skip(s).step_by(samples).take(n).copied().collect(),
        };
        for (m, &v) in mask.iter_mut().zip(&band_values) {
            let is_nodata = match nodata {
                Some(nd) if nd.is_nan() => v.is_nan(),
                Some(nd) => v == nd,
                None => false,
            };
            if is_nodata || !v.is_finite() {
                *m = false;
            }
        }
        let info = meta.get(s).cloned().unwrap_or_default();
        bands.push(Band {
            name: info.name.unwrap_or_else(|| format!("band_{}", s + 1)),
            wavelength: info.wavelength,
            values: band_values,
        });
    }
    // values under the mask are undefined; keep them finite
    for band in &mut bands {
        for (v, &ok) in band.values.iter_mut().zip(&mask) {
            if !ok {
                *v = 0.0;
            }
        }
    }
    Raster::new(width, height, bands, mask, geo)
}

fn parse_nodata(s: &str) -> Option<f64> {
    let t = s.trim().trim_end_matches('\0').trim();
    match t.to_ascii_lowercase().as_str() {
        "nan" | "-nan" => Some(f64::NAN),
        _ => t.parse().ok(),
    }
}

fn to_f64(buf: DecodingResult) -> Result<Vec<f64>> {
    Ok(match buf {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        _ => {
            return Err(LulcError::Format(
                "unsupported sample type (64-bit integer or f16)".into(),
            ))
        }
    })
}

fn read_georef<R: std::io::Read + Seek>(dec: &mut Decoder<R>, path: &Path) -> Result<GeoRef> {
    let err = |e| tiff_err(path, e);
    let keys = match dec.find_tag(Tag::GeoKeyDirectoryTag).map_err(err)? {
        Some(v) => v.into_u16_vec().map_err(err)?,
        None => Vec::new(),
    };
    let ascii = match dec.find_tag(Tag::GeoAsciiParamsTag).map_err(err)? {
        Some(v) => v.into_string().map_err(err)?,
        None => String::new(),
    };
    let geokeys = GeoKeys::parse(&keys, &ascii);
    let point = geokeys.short(KEY_RASTER_TYPE).unwrap_or(PIXEL_IS_AREA) == PIXEL_IS_POINT;
    // raster-space coordinate of pixel (0,0)'s center
    let center = if point { 0.0 } else { 0.5 };

    let scale = dec.find_tag(Tag::ModelPixelScaleTag).map_err(err)?;
    let tie = dec.find_tag(Tag::ModelTiepointTag).map_err(err)?;
    let (origin, pixel_size) = match (scale, tie) {
        (Some(scale), Some(tie)) => {
            let scale = scale.into_f64_vec().map_err(err)?;
            let tie = tie.into_f64_vec().map_err(err)?;
            if scale.len() < 2 || tie.len() < 6 {
                return Err(LulcError::Format("malformed ModelPixelScale/ModelTiepoint".into()));
            }
            let (sx, sy) = (scale[0], -scale[1]);
            let (i, j, x, y) = (tie[0], tie[1], tie[3], tie[4]);
            let ox = if center == i { x } else { x + (center - i) * sx };
            let oy = if center == j { y } else { y + (center - j) * sy };
            ((ox, oy), (sx, sy))
        }
        _ => match dec.find_tag(Tag::ModelTransformationTag).map_err(err)? {
            Some(t) => {
                let m = t.into_f64_vec().map_err(err)?;
                if m.len() < 16 {
                    return Err(LulcError::Format("malformed ModelTransformation".into()));
                }
                if m[1] != 0.0 || m[4] != 0.0 {
                    return Err(LulcError::Format("rotated geotransforms are not supported".into()));
                }
                let (sx, sy) = (m[0], m[5]);
                ((m[3] + center * sx, m[7] + center * sy), (sx, sy))
            }
            None => return Err(LulcError::Format(format!("{}: missing geotransform", path.display()))),
        },
    };
    GeoRef::new(geokeys.crs(), origin, pixel_size)
}

struct GeoKeys {
    entries: Vec<(u16, GeoKeyValue)>,
}

enum GeoKeyValue {
    Short(u16),
    Ascii(String),
}

impl GeoKeys {
    fn parse(dir: &[u16], ascii: &str) -> GeoKeys {
        let mut entries = Vec::new();
        if dir.len() >= 4 {
            let n = dir[3] as usize;
            for k in 0..n {
                let Some(e) = dir.get(4 + 4 * k..8 + 4 * k) else {
                    break;
                };
                let (key, loc, count, off) = (e[0], e[1], e[2] as usize, e[3] as usize);
                let value = match loc {
                    0 => GeoKeyValue::Short(e[3]),
                    l if l == 34737 => {
                        let s = ascii.get(off..off + count).unwrap_or("");
                        GeoKeyValue::Ascii(s.trim_end_matches(['|', '\0']).to_string())
                    }
                    _ => continue,
                };
                entries.push((key, value));
            }
        }
        GeoKeys { entries }
    }

    fn short(&self, key: u16) -> Option<u16> {
        self.entries.iter().find_map(|(k, v)| match v {
            GeoKeyValue::Short(s) if *k == key => Some(*s),
            _ => None,
        })
    }

    fn ascii(&self, key: u16) -> Option<&str> {
        self.entries.iter().find_map(|(k, v)| match v {
            GeoKeyValue::Ascii(s) if *k == key && !s.is_empty() => Some(s.as_str()),
            _ => None,
        })
    }

    fn crs(&self) -> String {
        for key in [KEY_PROJECTED_TYPE, KEY_GEOGRAPHIC_TYPE] {
            if let Some(code) = self.short(key).filter(|&c| c != USER_DEFINED && c != 0) {
                return format!("EPSG:{code}");
            }
        }
        self.ascii(KEY_CITATION)
            .or_else(|| self.ascii(KEY_GEOG_CITATION))
            .map(str::to_string)
            .unwrap_or_else(|| DEFAULT_CRS.to_string())
    }
}

#[derive(Debug, Clone, Default)]
struct BandMeta {
    name: Option<String>,
    wavelength: Option<(f64, f64)>,
}

/// Extracts per-sample DESCRIPTION and wavelength items from a GDAL metadata document.
fn parse_gdal_metadata(xml: &str) -> Vec<BandMeta> {
    let mut out: Vec<BandMeta> = Vec::new();
    let mut rest = xml;
    while let Some(start) = rest.find("<Item") {
        rest = &rest[start + 5..];
        let Some(close) = rest.find('>') else { break };
        let attrs = &rest[..close];
        rest = &rest[close + 1..];
        let Some(end) = rest.find("</Item>") else {
            break;
        };
        let text = unescape(&rest[..end]);
        rest = &rest[end + 7..];

        let attr = |name: &str| -> Option<&str> {
            let pat = format!("{name}=\"");
            let i = attrs.find(&pat)? + pat.len();
            let j = attrs[i..].find('"')?;
            Some(&attrs[i..i + j])
        };
        let Some(sample) = attr("sample").and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        if out.len() <= sample {
            out.resize(sample + 1, BandMeta::default());
        }
        match attr("name") {
            Some("DESCRIPTION") => out[sample].name = Some(text),
            Some("wavelength") => {
                let mut it = text.split(',').map(|p| p.trim().parse::<f64>());
                if let (Some(Ok(lo)), Some(Ok(hi))) = (it.next(), it.next()) {
                    out[sample].wavelength = Some((lo, hi));
                }
            }
            _ => {}
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn unescape(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&amp;", "&")
}

fn gdal_metadata(raster: &Raster) -> String {
    let mut xml = String::from("<GDALMetadata>\n");
    for (i, band) in raster.bands().iter().enumerate() {
        xml.push_str(&format!(
            "  <Item name=\"DESCRIPTION\" sample=\"{i}\" role=\"description\">{}</Item>\n",
            escape(&band.name)
        ));
        if let Some((lo, hi)) = band.wavelength {
            xml.push_str(&format!(
                "  <Item name=\"wavelength\" sample=\"{i}\">{lo:?},{hi:?}</Item>\n"
            ));
        }
    }
    xml.push_str("</GDALMetadata>");
    xml
}

fn epsg_code(crs: &str) -> Option<u16> {
    let code = crs.strip_prefix("EPSG:").or_else(|| crs.strip_prefix("epsg:"))?;
    code.parse::<u16>().ok().filter(|&c| c != USER_DEFINED && c != 0)
}

fn geokey_directory(crs: &str) -> (Vec<u16>, String) {
    let citation = format!("{crs}|");
    let mut keys: Vec<[u16; 4]> = Vec::new();
    let code = epsg_code(crs);
    // EPSG geographic 2D CRS codes live in the 4000-4999 block.
    let geographic = code.is_none_or(|c| (4000..5000).contains(&c));
    keys.push([
        KEY_MODEL_TYPE,
        0,
        1,
        if geographic { MODEL_GEOGRAPHIC } else { MODEL_PROJECTED },
    ]);
    keys.push([KEY_RASTER_TYPE, 0, 1, PIXEL_IS_POINT]);
    keys.push([KEY_CITATION, 34737, citation.len() as u16, 0]);
    match code {
        Some(c) if geographic => keys.push([KEY_GEOGRAPHIC_TYPE, 0, 1, c]),
        Some(c) => keys.push([KEY_PROJECTED_TYPE, 0, 1, c]),
        None => keys.push([KEY_GEOGRAPHIC_TYPE, 0, 1, USER_DEFINED]),
    }
    let mut dir = vec![1, 1, 0, keys.len() as u16];
    dir.extend(keys.into_iter().flatten());
    (dir, citation)
}

pub fn write_geotiff(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LulcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(raster, &mut w).map_err(|e| tiff_err(path, e))?;
    w.flush().map_err(|e| LulcError::io(path, e))
}

fn encode<W: Write + Seek>(raster: &Raster, w: &mut W) -> tiff::TiffResult<()> {
    let n_bands = raster.band_count();
    let n = raster.pixel_count();
    let mut enc = TiffEncoder::new(w)?;
    let mut dir = enc.image_directory()?;

    let mut offsets = Vec::with_capacity(n_bands);
    let mut scratch = vec![0.0f64; n];
    for band in raster.bands() {
        for ((s, &v), &ok) in scratch.iter_mut().zip(&band.values).zip(raster.mask()) {
            *s = if ok { v } else { f64::NAN };
        }
        offsets.push(dir.write_data(scratch.as_slice())? as u32);
    }
    let byte_counts = vec![(n * 8) as u32; n_bands];

    dir.write_tag(Tag::ImageWidth, raster.width() as u32)?;
    dir.write_tag(Tag::ImageLength, raster.height() as u32)?;
    dir.write_tag(Tag::BitsPerSample, vec![64u16; n_bands].as_slice())?;
    dir.write_tag(Tag::Compression, 1u16)?;
    dir.write_tag(Tag::PhotometricInterpretation, 1u16)?;
    dir.write_tag(Tag::StripOffsets, offsets.as_slice())?;
    dir.write_tag(Tag::SamplesPerPixel, n_bands as u16)?;
    dir.write_tag(Tag::RowsPerStrip, raster.height() as u32)?;
    dir.write_tag(Tag::StripByteCounts, byte_counts.as_slice())?;
    dir.write_tag(Tag::PlanarConfiguration, 2u16)?;
    if n_bands > 1 {
        dir.write_tag(Tag::ExtraSamples, vec![0u16; n_bands - 1].as_slice())?;
    }
    dir.write_tag(
        Tag::SampleFormat,
        vec![SampleFormat::IEEEFP.to_u16(); n_bands].as_slice(),
    )?;

    let geo = raster.geo();
    dir.write_tag(Tag::ModelPixelScaleTag, &[geo.pixel_size.0, -geo.pixel_size.1, 0.0][..])?;
    dir.write_tag(
        Tag::ModelTiepointTag,
        &[0.0, 0.0, 0.0, geo.origin.0, geo.origin.1, 0.0][..],
    )?;
    let (keys, ascii) = geokey_directory(&geo.crs);
    dir.write_tag(Tag::GeoKeyDirectoryTag, keys.as_slice())?;
    dir.write_tag(Tag::GeoAsciiParamsTag, ascii.as_str())?;
    dir.write_tag(Tag::Unknown(TAG_GDAL_METADATA), gdal_metadata(raster).as_str())?;
    dir.write_tag(Tag::GdalNodata, "nan")?;
    dir.finish()
}
