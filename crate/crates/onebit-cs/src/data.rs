//! Signal sources: synthetic sparse vectors, IDX image files, and the
//! dataset/signal container files shared by the tools.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::norm;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDist {
    /// Nonzero magnitudes uniform on [0, 1].
    Uniform01,
    /// Nonzero magnitudes uniform on [0.5, 1].
    UniformHalfOne,
}

impl ValueDist {
    pub fn name(self) -> &'static str {
        match self {
            ValueDist::Uniform01 => "uniform_01",
            ValueDist::UniformHalfOne => "uniform_half_one",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform_01" => Some(ValueDist::Uniform01),
            "uniform_half_one" => Some(ValueDist::UniformHalfOne),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseSpec {
    pub n: usize,
    pub k: usize,
    pub value_dist: ValueDist,
    pub normalize: bool,
}

impl SparseSpec {
    pub fn new(n: usize, k: usize, value_dist: ValueDist, normalize: bool) -> Result<Self> {
        if n == 0 || k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "sparse spec needs 1 <= k <= n, got k = {k}, n = {n}"
            )));
        }
        Ok(SparseSpec {
            n,
            k,
            value_dist,
            normalize,
        })
    }
}

/// Draws a k-sparse vector: support uniform without replacement, nonzero
/// values from the configured distribution, optional scaling to unit norm.
pub fn sample_sparse(spec: &SparseSpec, stream: &mut RngStream) -> Result<Vec<f64>> {
    if spec.k == 0 || spec.k > spec.n {
        return Err(Error::InvalidArgument(format!(
            "sparse spec needs 1 <= k <= n, got k = {}, n = {}",
            spec.k, spec.n
        )));
    }
    // Partial Fisher-Yates: the first k entries of `indices` become the support.
    let mut indices: Vec<usize> = (0..spec.n).collect();
    for i in 0..spec.k {
        let j = i + stream.index(spec.n - i);
        indices.swap(i, j);
    }
    let mut x = vec![0.0; spec.n];
    for &idx in &indices[..spec.k] {
        let u = stream.uniform();
        x[idx] = match spec.value_dist {
            ValueDist::Uniform01 => u,
            ValueDist::UniformHalfOne => 0.5 + 0.5 * u,
        };
    }
    if spec.normalize {
        let len = norm(&x);
        if len > 0.0 {
            for v in &mut x {
                *v /= len;
            }
        }
    }
    Ok(x)
}

/// Flattened image collection with pixels already scaled into [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// count * height * width values, row-major per image.
    pub pixels: Vec<f64>,
}

impl ImageDataset {
    pub fn item_dim(&self) -> usize {
        self.height * self.width
    }

    pub fn item(&self, i: usize) -> &[f64] {
        let d = self.item_dim();
        &self.pixels[i * d..(i + 1) * d]
    }

    pub fn items(&self) -> Vec<Vec<f64>> {
        (0..self.count).map(|i| self.item(i).to_vec()).collect()
    }
}

const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;
const IDX_MAGIC_LABELS: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::parse(
            path,
            format!("truncated {what} at byte offset {offset}: need 4 bytes, file has {}", bytes.len()),
        ));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Reads an IDX file of unsigned bytes. Image files (magic 0x00000803) load
/// as count x height x width; label files (magic 0x00000801) load as 1x1
/// items. Every byte is scaled by 1/255.
pub fn read_idx(path: &Path) -> Result<ImageDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let magic = read_be_u32(&bytes, 0, path, "magic number")?;
    let (count, height, width, payload_offset) = match magic {
        IDX_MAGIC_IMAGES => {
            let count = read_be_u32(&bytes, 4, path, "image count")? as usize;
            let height = read_be_u32(&bytes, 8, path, "image height")? as usize;
            let width = read_be_u32(&bytes, 12, path, "image width")? as usize;
            (count, height, width, 16)
        }
        IDX_MAGIC_LABELS => {
            let count = read_be_u32(&bytes, 4, path, "label count")? as usize;
            (count, 1, 1, 8)
        }
        other => {
            return Err(Error::parse(
                path,
                format!("bad magic number 0x{other:08x} at byte offset 0; expected 0x00000803 (images) or 0x00000801 (labels)"),
            ));
        }
    };
    let expected = count
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| Error::parse(path, "header dimensions overflow"))?;
    let available = bytes.len() - payload_offset.min(bytes.len());
    if available != expected {
        return Err(Error::parse(
            path,
            format!(
                "payload at byte offset {payload_offset} has {available} bytes but the header promises {expected} (= {count} items of {height}x{width})"
            ),
        ));
    }
    let pixels = bytes[payload_offset..]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok(ImageDataset {
        count,
        height,
        width,
        pixels,
    })
}

/// v / ||v||_2; the zero vector has no direction.
pub fn normalize_unit(v: &[f64]) -> Result<Vec<f64>> {
    let len = norm(v);
    if len == 0.0 {
        return Err(Error::DegenerateInput(
            "cannot normalize the zero vector".into(),
        ));
    }
    Ok(v.iter().map(|x| x / len).collect())
}

pub fn save_dataset(signals: &[Vec<f64>], path: &Path) -> Result<()> {
    let n = signals.first().map_or(0, |s| s.len());
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str("  \"format_version\": 1,\n");
    out.push_str("  \"kind\": \"dataset\",\n");
    out.push_str(&format!("  \"n\": {n},\n"));
    out.push_str(&format!("  \"count\": {},\n", signals.len()));
    out.push_str("  \"signals\": [\n");
    for (i, s) in signals.iter().enumerate() {
        out.push_str("    ");
        io::push_float_array(&mut out, s);
        if i + 1 < signals.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ]\n}\n");
    io::write_text_file(path, &out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Vec<f64>>> {
    let value = io::read_json_file(path)?;
    io::check_format_version(&value, path)?;
    let kind = io::get_str(&value, path, "kind")?;
    if kind != "dataset" {
        return Err(Error::parse(
            path,
            format!("expected kind \"dataset\", got \"{kind}\""),
        ));
    }
    let n = io::get_usize(&value, path, "n")?;
    let count = io::get_usize(&value, path, "count")?;
    let rows = io::get_array(&value, path, "signals")?;
    if rows.len() != count {
        return Err(Error::parse(
            path,
            format!("`signals` has {} rows but count = {count}", rows.len()),
        ));
    }
    let mut signals = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let arr = row.as_array().ok_or_else(|| {
            Error::parse(path, format!("field `signals[{i}]` must be an array"))
        })?;
        let mut s = Vec::with_capacity(arr.len());
        for (j, v) in arr.iter().enumerate() {
            s.push(v.as_f64().ok_or_else(|| {
                Error::parse(path, format!("field `signals[{i}][{j}]` must be a number"))
            })?);
        }
        if s.len() != n {
            return Err(Error::parse(
                path,
                format!("`signals[{i}]` has length {} but n = {n}", s.len()),
            ));
        }
        signals.push(s);
    }
    Ok(signals)
}

/// Loads signal rows from either a JSON dataset or an IDX image file.
///
/// The formats are told apart by the leading bytes: every IDX file starts with
/// two zero bytes (the high half of its big-endian magic), which can never
/// begin a JSON document. Image pixels come back scaled to [0, 1], one
/// flattened row per image, exactly as [`ImageDataset::items`] returns them.
pub fn load_signals(path: &Path) -> Result<Vec<Vec<f64>>> {
    use std::io::Read;
    let mut head = [0u8; 2];
    let read = std::fs::File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if read == 2 && head == [0, 0] {
        Ok(read_idx(path)?.items())
    } else {
        load_dataset(path)
    }
}

pub fn save_signal(signal: &[f64], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str("  \"format_version\": 1,\n");
    out.push_str("  \"kind\": \"signal\",\n");
    out.push_str(&format!("  \"n\": {},\n", signal.len()));
    out.push_str("  \"values\": ");
    io::push_float_array(&mut out, signal);
    out.push_str("\n}\n");
    io::write_text_file(path, &out)
}

pub fn load_signal(path: &Path) -> Result<Vec<f64>> {
    let value = io::read_json_file(path)?;
    io::check_format_version(&value, path)?;
    let kind = io::get_str(&value, path, "kind")?;
    if kind != "signal" {
        return Err(Error::parse(
            path,
            format!("expected kind \"signal\", got \"{kind}\""),
        ));
    }
    let n = io::get_usize(&value, path, "n")?;
    let values = io::get_f64_array(&value, path, "values")?;
    if values.len() != n {
        return Err(Error::parse(
            path,
            format!("`values` has length {} but n = {n}", values.len()),
        ));
    }
    Ok(values)
}
