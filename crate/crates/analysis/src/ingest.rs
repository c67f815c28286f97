//! Loading experimental artifacts from disk.
//!
//! Three on-disk formats are understood:
//!
//! * 8/16-bit grayscale PNG images;
//! * little-endian C-order `f32` rasters with a JSON sidecar (images and
//!   hyperspectral cubes);
//! * CSV curves with two or three columns and a unit header row.
//!
//! The sidecar for `data.bin` is looked up as `data.bin.json` first and then
//! `data.json`.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, Result};

/// Grayscale image normalized to `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// nm per pixel
    pub pixel_size: Option<f64>,
}

impl ImageGrid {
    /// Build from raw values, applying min-max normalization. Constant
    /// images map to all zeros.
    pub fn from_raw(width: usize, height: usize, raw: Vec<f64>, pixel_size: Option<f64>) -> Result<Self> {
        if raw.len() != width * height {
            return Err(AnalysisError::DimensionMismatch(format!(
                "{} values for a {width}x{height} image",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFiniteData("image".into()));
        }
        Ok(Self { width, height, values: normalize_min_max(raw), pixel_size })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }
}

pub fn normalize_min_max(mut values: Vec<f64>) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        values.iter_mut().for_each(|v| *v = 0.0);
        return values;
    }
    for v in values.iter_mut() {
        *v = ((*v - lo) / span).clamp(0.0, 1.0);
    }
    values
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralUnit {
    #[serde(rename = "nm")]
    Nanometer,
    #[serde(rename = "eV")]
    ElectronVolt,
}

/// Hyperspectral cube, layout `(y, x, band)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    pub nx: usize,
    pub ny: usize,
    pub nbands: usize,
    pub wavelengths: Vec<f64>,
    pub unit: SpectralUnit,
    pub values: Vec<f64>,
    /// spatial step, nm per pixel
    pub pixel_size: Option<f64>,
}

impl HyperCube {
    pub fn new(
        nx: usize,
        ny: usize,
        wavelengths: Vec<f64>,
        unit: SpectralUnit,
        values: Vec<f64>,
    ) -> Result<Self> {
        let nbands = wavelengths.len();
        if values.len() != nx * ny * nbands {
            return Err(AnalysisError::DimensionMismatch(format!(
                "{} values for a {ny}x{nx}x{nbands} cube",
                values.len()
            )));
        }
        check_increasing(&wavelengths)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFiniteData("cube".into()));
        }
        let values = clamp_small_negatives(values)?;
        Ok(Self { nx, ny, nbands, wavelengths, unit, values, pixel_size: None })
    }

    pub fn spectrum(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.nx + x) * self.nbands;
        &self.values[start..start + self.nbands]
    }

    pub fn pixels(&self) -> usize {
        self.nx * self.ny
    }
}

fn clamp_small_negatives(mut values: Vec<f64>) -> Result<Vec<f64>> {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-6 * max;
    for (i, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -tol {
                return Err(AnalysisError::NegativeIntensity { index: i, value: *v });
            }
            *v = 0.0;
        }
    }
    Ok(values)
}

fn check_increasing(xs: &[f64]) -> Result<()> {
    for i in 1..xs.len() {
        if !(xs[i] > xs[i - 1]) {
            return Err(AnalysisError::NonMonotoneAxis { index: i });
        }
    }
    Ok(())
}

/// A 1-D measurement such as a spectrum or an I-V curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve1D {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
    pub x_unit: String,
    pub y_unit: String,
}

impl Curve1D {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>, x_unit: &str, y_unit: &str) -> Result<Self> {
        if x.len() != y.len() || sigma.as_ref().is_some_and(|s| s.len() != x.len()) {
            return Err(AnalysisError::DimensionMismatch("curve columns differ in length".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFiniteData("curve".into()));
        }
        check_increasing(&x)?;
        if let Some(s) = &sigma {
            if let Some(i) = s.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(AnalysisError::InvalidArgument(format!("sigma[{i}] must be positive")));
            }
        }
        Ok(Self { x, y, sigma, x_unit: x_unit.to_string(), y_unit: y_unit.to_string() })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// JSON sidecar describing a raw `f32` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dtype: String,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_unit: Option<SpectralUnit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wavelengths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_size_nm: Option<f64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let appended = PathBuf::from(format!("{}.json", path.display()));
    if appended.exists() {
        return appended;
    }
    let replaced = path.with_extension("json");
    if replaced.exists() {
        replaced
    } else {
        appended
    }
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| AnalysisError::io(&side, e))?;
    let sc: Sidecar =
        serde_json::from_str(&text).map_err(|e| AnalysisError::CorruptHeader(format!("{}: {e}", side.display())))?;
    if sc.dtype != "f32" {
        return Err(AnalysisError::UnsupportedFormat(format!("dtype {:?}", sc.dtype)));
    }
    Ok(sc)
}

fn read_f32_le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| AnalysisError::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(AnalysisError::DimensionMismatch(format!(
            "{} holds {} bytes, sidecar shape needs {}",
            path.display(),
            bytes.len(),
            expected * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_f32_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| AnalysisError::io(path, e))
}

fn write_sidecar(path: &Path, sc: &Sidecar) -> Result<()> {
    let side = PathBuf::from(format!("{}.json", path.display()));
    let text = serde_json::to_string_pretty(sc).expect("sidecar serializes");
    fs::write(&side, text).map_err(|e| AnalysisError::io(&side, e))
}

fn is_png(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Load a grayscale PNG or a raw `f32` raster with sidecar.
pub fn load_image(path: &Path) -> Result<ImageGrid> {
    if is_png(path) {
        return load_png(path);
    }
    let sc = read_sidecar(path)?;
    let [height, width] = sc.shape[..] else {
        return Err(AnalysisError::CorruptHeader(format!("image shape must be [height, width], got {:?}", sc.shape)));
    };
    let raw = read_f32_le(path, width * height)?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFiniteData(path.display().to_string()));
    }
    ImageGrid::from_raw(width, height, raw, sc.pixel_size_nm)
}

fn load_png(path: &Path) -> Result<ImageGrid> {
    let file = fs::File::open(path).map_err(|e| AnalysisError::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| AnalysisError::CorruptHeader(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| AnalysisError::CorruptHeader("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| AnalysisError::CorruptHeader(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(AnalysisError::UnsupportedFormat(format!("PNG color type {:?}", info.color_type)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let raw: Vec<f64> = match info.bit_depth {
        png::BitDepth::Eight => buf[..w * h].iter().map(|&b| b as f64).collect(),
        png::BitDepth::Sixteen => buf[..w * h * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect(),
        other => return Err(AnalysisError::UnsupportedFormat(format!("PNG bit depth {other:?}"))),
    };
    ImageGrid::from_raw(w, h, raw, None)
}

/// Write a 16-bit grayscale PNG.
pub fn write_png16(path: &Path, width: usize, height: usize, values: &[u16]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| AnalysisError::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| AnalysisError::UnsupportedFormat(e.to_string()))?;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    writer.write_image_data(&bytes).map_err(|e| AnalysisError::UnsupportedFormat(e.to_string()))
}

/// Write an image as raw `f32` plus sidecar.
pub fn write_image_raw(path: &Path, image: &ImageGrid) -> Result<()> {
    write_f32_le(path, &image.values)?;
    write_sidecar(
        path,
        &Sidecar {
            dtype: "f32".into(),
            shape: vec![image.height, image.width],
            axis_unit: None,
            wavelengths: vec![],
            pixel_size_nm: image.pixel_size,
        },
    )
}

pub fn load_cube(path: &Path) -> Result<HyperCube> {
    let sc = read_sidecar(path)?;
    let [ny, nx, nbands] = sc.shape[..] else {
        return Err(AnalysisError::CorruptHeader(format!("cube shape must be [ny, nx, nbands], got {:?}", sc.shape)));
    };
    if sc.wavelengths.len() != nbands {
        return Err(AnalysisError::DimensionMismatch(format!(
            "{} wavelengths for {nbands} bands",
            sc.wavelengths.len()
        )));
    }
    let unit = sc.axis_unit.ok_or_else(|| AnalysisError::CorruptHeader("cube sidecar lacks axis_unit".into()))?;
    let raw = read_f32_le(path, nx * ny * nbands)?;
    let mut cube = HyperCube::new(nx, ny, sc.wavelengths, unit, raw)?;
    cube.pixel_size = sc.pixel_size_nm;
    Ok(cube)
}

pub fn write_cube(path: &Path, cube: &HyperCube) -> Result<()> {
    write_f32_le(path, &cube.values)?;
    write_sidecar(
        path,
        &Sidecar {
            dtype: "f32".into(),
            shape: vec![cube.ny, cube.nx, cube.nbands],
            axis_unit: Some(cube.unit),
            wavelengths: cube.wavelengths.clone(),
            pixel_size_nm: cube.pixel_size,
        },
    )
}

/// Split a header cell such as `wavelength [nm]` or `current (nA)` into name and unit.
fn split_unit(cell: &str) -> (String, String) {
    let cell = cell.trim();
    for (open, close) in [('[', ']'), ('(', ')')] {
        if let (Some(a), Some(b)) = (cell.find(open), cell.rfind(close)) {
            if a < b {
                return (cell[..a].trim().to_string(), cell[a + 1..b].trim().to_string());
            }
        }
    }
    (cell.to_string(), String::new())
}

pub fn load_curve(path: &Path) -> Result<Curve1D> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| AnalysisError::CorruptHeader(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| AnalysisError::CorruptHeader(e.to_string()))?.clone();
    let ncols = headers.len();
    if !(2..=3).contains(&ncols) {
        return Err(AnalysisError::DimensionMismatch(format!("expected 2 or 3 columns, found {ncols}")));
    }
    let x_unit = split_unit(&headers[0]).1;
    let y_unit = split_unit(&headers[1]).1;
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ncols];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AnalysisError::DimensionMismatch(format!("row {}: {e}", row + 2)))?;
        if rec.len() != ncols {
            return Err(AnalysisError::DimensionMismatch(format!("row {} has {} columns", row + 2, rec.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| AnalysisError::CorruptHeader(format!("row {}: {field:?} is not a number", row + 2)))?;
            cols[c].push(v);
        }
    }
    let sigma = if ncols == 3 { Some(cols.pop().unwrap()) } else { None };
    let y = cols.pop().unwrap();
    let x = cols.pop().unwrap();
    Curve1D::new(x, y, sigma, &x_unit, &y_unit)
}

pub fn write_curve(path: &Path, curve: &Curve1D) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AnalysisError::CorruptHeader(e.to_string()))?;
    let mut header = vec![format!("x [{}]", curve.x_unit), format!("y [{}]", curve.y_unit)];
    if curve.sigma.is_some() {
        header.push(format!("sigma [{}]", curve.y_unit));
    }
    let csv_err = |e: csv::Error| AnalysisError::CorruptHeader(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..curve.len() {
        let mut rec = vec![format!("{:e}", curve.x[i]), format!("{:e}", curve.y[i])];
        if let Some(s) = &curve.sigma {
            rec.push(format!("{:e}", s[i]));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| AnalysisError::io(path, e))
}
