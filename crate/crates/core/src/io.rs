//! Binary array files and human-readable exports.
//!
//! All binary formats are little-endian and store samples as `f32`:
//!
//! * `DCAF` volume: magic, `u16` version, `nx ny nz: u32`, `dx dy dz z0: f64`,
//!   `u8` flag (0 real only, 1 complex pair), then the `re` slices followed
//!   by the `im` slices when present, each slice `x`-major.
//! * `DCAM` measurements: magic, `p nx ny: u32`, then the images in order.
//! * `DCFW` field weights: magic, `u32` length + JSON [`FieldConfig`], then
//!   every layer's weight matrix (`fan_in × fan_out`, row-major) and bias.
//! * `DCDN` denoiser weights: magic, `u32` length + JSON header, then the
//!   convolution kernels and biases layer by layer.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::denoiser::{Dncnn, DncnnConfig};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, Mlp, NeuralField};
use crate::optics::MeasurementSet;
use crate::optim::Params;
use crate::volume::{Grid3D, PermittivityVolume};

pub const VOLUME_VERSION: u16 = 1;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Little-endian byte cursor over a whole file.
struct Reader<'a> {
    path: &'a Path,
    data: Vec<u8>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path, magic: &[u8; 4]) -> Result<Self> {
        let mut data = Vec::new();
        File::open(path)?.read_to_end(&mut data)?;
        let mut r = Self { path, data, pos: 0 };
        if r.take(4)? != magic {
            return Err(format_err(path, format!("missing {} magic", String::from_utf8_lossy(magic))));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.data.len() - self.pos < n {
            return Err(format_err(self.path, "file is truncated"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| format_err(self.path, "array size overflows"))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }

    fn json<T: for<'de> Deserialize<'de>>(&mut self) -> Result<T> {
        let len = self.u32()? as usize;
        let path = self.path;
        let raw = self.take(len)?;
        serde_json::from_slice(raw).map_err(|e| format_err(path, format!("bad header: {e}")))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(format_err(
                self.path,
                format!("{} trailing bytes", self.data.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn put_f32s<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn put_json<T: Serialize>(out: &mut Vec<u8>, value: &T) -> Result<()> {
    let json = serde_json::to_vec(value)?;
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

fn dim_u32(path: &Path, n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| format_err(path, format!("dimension {n} exceeds u32")))
}

/// Writes a volume. The imaginary channel is omitted when it is all zero.
pub fn write_volume(path: &Path, vol: &PermittivityVolume) -> Result<()> {
    let g = vol.grid;
    let complex = vol.im.iter().any(|&v| v != 0.0);
    let mut out = Vec::with_capacity(64 + 8 * g.voxel_count());
    out.extend_from_slice(b"DCAF");
    out.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
    for n in [g.nx, g.ny, g.nz] {
        out.extend_from_slice(&dim_u32(path, n)?.to_le_bytes());
    }
    for d in [g.dx, g.dy, g.dz, g.z0] {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(u8::from(complex));
    put_f32s(&mut out, vol.re.iter());
    if complex {
        put_f32s(&mut out, vol.im.iter());
    }
    write_bytes(path, &out)
}

pub fn read_volume(path: &Path) -> Result<PermittivityVolume> {
    let mut r = Reader::open(path, b"DCAF")?;
    let version = r.u16()?;
    if version != VOLUME_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let (nx, ny, nz) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let (dx, dy, dz, z0) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let grid = Grid3D::new(nx, ny, nz, dx, dy, dz, z0).map_err(|e| format_err(path, e.to_string()))?;
    let flag = r.u8()?;
    if flag > 1 {
        return Err(format_err(path, format!("unknown channel flag {flag}")));
    }
    let n = grid.voxel_count();
    let re = Array3::from_shape_vec(grid.shape(), r.f32s(n)?).expect("length checked");
    let im = if flag == 1 {
        Array3::from_shape_vec(grid.shape(), r.f32s(n)?).expect("length checked")
    } else {
        Array3::zeros(grid.shape())
    };
    r.finish()?;
    PermittivityVolume::new(grid, re, im)
}

pub fn write_measurements(path: &Path, meas: &MeasurementSet) -> Result<()> {
    let (p, nx, ny) = meas.images.dim();
    let mut out = Vec::with_capacity(16 + 4 * meas.images.len());
    out.extend_from_slice(b"DCAM");
    for n in [p, nx, ny] {
        out.extend_from_slice(&dim_u32(path, n)?.to_le_bytes());
    }
    put_f32s(&mut out, meas.images.iter());
    write_bytes(path, &out)
}

pub fn read_measurements(path: &Path) -> Result<MeasurementSet> {
    let mut r = Reader::open(path, b"DCAM")?;
    let (p, nx, ny) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let data = r.f32s(p * nx * ny)?;
    r.finish()?;
    Ok(MeasurementSet {
        images: Array3::from_shape_vec((p, nx, ny), data).expect("length checked"),
    })
}

fn put_params(out: &mut Vec<u8>, params: &Params) {
    for (w, b) in params.weights.iter().zip(&params.biases) {
        put_f32s(out, w.iter());
        put_f32s(out, b.iter());
    }
}

fn read_params(r: &mut Reader<'_>, shapes: &[(usize, usize)], bias_len: impl Fn(usize) -> usize) -> Result<Params> {
    let mut params = Params::zeros(shapes);
    for (l, &(rows, cols)) in shapes.iter().enumerate() {
        params.weights[l] = Array2::from_shape_vec((rows, cols), r.f32s(rows * cols)?).expect("length checked");
        params.biases[l] = ndarray::Array1::from(r.f32s(bias_len(l))?);
    }
    Ok(params)
}

/// Rounds every weight to `f32`, the precision kept by the weight file.
pub fn quantize_params(params: &mut Params) {
    params.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

pub fn write_field(path: &Path, field: &NeuralField) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(b"DCFW");
    put_json(&mut out, &field.config())?;
    put_params(&mut out, &field.mlp.params);
    write_bytes(path, &out)
}

pub fn read_field(path: &Path) -> Result<NeuralField> {
    let mut r = Reader::open(path, b"DCFW")?;
    let config: FieldConfig = r.json()?;
    let mut field = NeuralField::new(&config).map_err(|e| format_err(path, e.to_string()))?;
    let shapes = config.mlp.layer_shapes(field.encoder.width());
    let params = read_params(&mut r, &shapes, |l| shapes[l].1)?;
    r.finish()?;
    field.mlp = Mlp::from_params(config.mlp, field.encoder.width(), params)?;
    Ok(field)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenoiserHeader {
    config: DncnnConfig,
    sigma: f64,
}

/// Writes a trained CNN with the noise level it was trained for.
pub fn write_denoiser(path: &Path, net: &Dncnn, sigma: f64) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(b"DCDN");
    put_json(
        &mut out,
        &DenoiserHeader {
            config: net.config().clone(),
            sigma,
        },
    )?;
    put_params(&mut out, &net.params);
    write_bytes(path, &out)
}

/// Returns the network and its training noise level.
pub fn read_denoiser(path: &Path) -> Result<(Dncnn, f64)> {
    let mut r = Reader::open(path, b"DCDN")?;
    let header: DenoiserHeader = r.json()?;
    header.config.validate().map_err(|e| format_err(path, e.to_string()))?;
    let shapes = header.config.layer_shapes();
    let params = read_params(&mut r, &shapes, |l| shapes[l].0)?;
    r.finish()?;
    Ok((Dncnn::from_params(header.config, params)?, header.sigma))
}

/// Axis normal to an exported slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for SliceAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Self::X),
            "y" => Ok(Self::Y),
            "z" => Ok(Self::Z),
            _ => Err(Error::Config(format!("unknown slice axis '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Png,
    Csv,
}

/// 2D cut through a `[z, x, y]` array: a z-slice gives an `(x, y)` image,
/// an x-slice `(z, y)` and a y-slice `(z, x)`.
pub fn slice_of(vol: &Array3<f64>, axis: SliceAxis, index: usize) -> Result<Array2<f64>> {
    let ax = match axis {
        SliceAxis::Z => Axis(0),
        SliceAxis::X => Axis(1),
        SliceAxis::Y => Axis(2),
    };
    let len = vol.len_of(ax);
    if index >= len {
        return Err(Error::OutOfBounds { index, len });
    }
    Ok(vol.index_axis(ax, index).to_owned())
}

/// Value range stored beside a PNG export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PngSidecar {
    pub min: f64,
    pub max: f64,
    pub axis: SliceAxis,
    pub index: usize,
}

/// Path of the JSON sidecar written next to `png`.
pub fn sidecar_path(png: &Path) -> std::path::PathBuf {
    let mut s = png.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Writes one slice as a 16-bit grayscale PNG (rows are the first image
/// axis, linearly mapped from `[min, max]` to `[0, 65535]`) with a min/max
/// sidecar, or as CSV of the raw values.
pub fn export_slice(vol: &Array3<f64>, axis: SliceAxis, index: usize, format: ExportFormat, path: &Path) -> Result<()> {
    let img = slice_of(vol, axis, index)?;
    match format {
        ExportFormat::Csv => write_csv_image(path, &img),
        ExportFormat::Png => {
            let min = img.iter().copied().fold(f64::INFINITY, f64::min);
            let max = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            write_png16(path, &img, min, max)?;
            let side = PngSidecar { min, max, axis, index };
            write_bytes(&sidecar_path(path), &serde_json::to_vec_pretty(&side)?)
        }
    }
}

fn write_png16(path: &Path, img: &Array2<f64>, min: f64, max: f64) -> Result<()> {
    let (h, w) = img.dim();
    let span = max - min;
    let mut data = Vec::with_capacity(2 * h * w);
    for &v in img.iter() {
        let t = if span > 0.0 { (v - min) / span } else { 0.0 };
        let q = (t * 65535.0).round().clamp(0.0, 65535.0) as u16;
        data.extend_from_slice(&q.to_be_bytes());
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, dim_u32(path, w)?, dim_u32(path, h)?);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| format_err(path, e.to_string()))?;
    writer
        .write_image_data(&data)
        .map_err(|e| format_err(path, e.to_string()))?;
    writer.finish().map_err(|e| format_err(path, e.to_string()))?;
    Ok(())
}

/// Reads a 16-bit grayscale PNG as raw code values.
pub fn read_png16(path: &Path) -> Result<Array2<u16>> {
    let dec = png::Decoder::new(std::io::BufReader::new(File::open(path)?));
    let mut reader = dec.read_info().map_err(|e| format_err(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| format_err(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Sixteen || info.color_type != png::ColorType::Grayscale {
        return Err(format_err(path, "expected 16-bit grayscale"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let vals = buf[..2 * w * h]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(Array2::from_shape_vec((h, w), vals).expect("length checked"))
}

/// CSV of an image with values rounded to `f32` and printed in their
/// shortest round-trip form.
pub fn write_csv_image(path: &Path, img: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| format_err(path, e.to_string()))?;
    for row in img.axis_iter(Axis(0)) {
        w.write_record(row.iter().map(|&v| (v as f32).to_string()))
            .map_err(|e| format_err(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_image(path: &Path) -> Result<Array2<f32>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| format_err(path, e.to_string()))?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_err(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format_err(path, e.to_string()))?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(format_err(path, "ragged rows"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.concat()).map_err(|e| format_err(path, e.to_string()))
}

/// Voxels `[z, x, y]` along the straight segment from `a` to `b`, sampled
/// at one point per voxel step of the longest axis and rounded to the
/// nearest index.
pub fn line_path(a: [usize; 3], b: [usize; 3]) -> Vec<[usize; 3]> {
    let steps = (0..3).map(|k| a[k].abs_diff(b[k])).max().unwrap_or(0);
    (0..=steps)
        .map(|s| {
            let t = if steps == 0 { 0.0 } else { s as f64 / steps as f64 };
            let mut p = [0; 3];
            for k in 0..3 {
                p[k] = (a[k] as f64 + t * (b[k] as f64 - a[k] as f64)).round() as usize;
            }
            p
        })
        .collect()
}

/// Writes `step,z,x,y,value` rows for every voxel on `path_voxels`.
pub fn export_line_profile(vol: &Array3<f64>, path_voxels: &[[usize; 3]], path: &Path) -> Result<()> {
    let (nz, nx, ny) = vol.dim();
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    w.write_record(["step", "z", "x", "y", "value"])
        .map_err(|e| format_err(path, e.to_string()))?;
    for (s, p) in path_voxels.iter().enumerate() {
        for (k, len) in [nz, nx, ny].into_iter().enumerate() {
            if p[k] >= len {
                return Err(Error::OutOfBounds { index: p[k], len });
            }
        }
        w.write_record([
            s.to_string(),
            p[0].to_string(),
            p[1].to_string(),
            p[2].to_string(),
            (vol[*p] as f32).to_string(),
        ])
        .map_err(|e| format_err(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
