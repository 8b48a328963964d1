//! Native benchmark formats: CIFAR-10 binary batches and SVHN `.mat` files.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::ZlibDecoder;
use ndarray::Array4;

use super::{normalize_u8, DatasetSplit, Split};
use crate::error::{Error, Result};

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

fn parse_cifar_records(
    bytes: &[u8],
    path: &Path,
    pixels: &mut Vec<f64>,
    labels: &mut Vec<usize>,
) -> Result<()> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Data(format!(
            "{} is {} bytes, not a multiple of the {CIFAR_RECORD}-byte record",
            path.display(),
            bytes.len()
        )));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        let label = rec[0] as usize;
        if label >= CIFAR10_CLASSES.len() {
            return Err(Error::Data(format!(
                "{} has label byte {label}",
                path.display()
            )));
        }
        labels.push(label);
        let body = &rec[1..];
        for p in 0..plane {
            for c in 0..3 {
                pixels.push(normalize_u8(body[c * plane + p]));
            }
        }
    }
    Ok(())
}

/// Reads the CIFAR-10 binary distribution from `dir` (the extracted
/// `cifar-10-batches-bin` directory): `data_batch_{1..5}.bin` for the training
/// split and `test_batch.bin` for the test split.
pub fn load_cifar10(dir: &Path, split: Split) -> Result<DatasetSplit> {
    let files: Vec<String> = match split {
        Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".into()],
    };
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for name in files {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        parse_cifar_records(&bytes, &path, &mut pixels, &mut labels)?;
    }
    let n = labels.len();
    let images =
        Array4::from_shape_vec((n, CIFAR_SIDE, CIFAR_SIDE, 3), pixels).expect("record size");
    DatasetSplit::new(
        images,
        labels,
        split,
        CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

/// A numeric MATLAB array. `data` is in MATLAB (column-major) order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatArray {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Data("truncated MAT file".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    /// Reads one data element, returning its type and payload.
    fn element(&mut self) -> Result<(u32, &'a [u8])> {
        let first = self.u32()?;
        if first >> 16 != 0 {
            let len = (first >> 16) as usize;
            let payload = self.take(4)?;
            return Ok((first & 0xffff, &payload[..len.min(4)]));
        }
        let len = self.u32()? as usize;
        let payload = self.take(len)?;
        if first != MI_COMPRESSED {
            let pad = (8 - len % 8) % 8;
            self.pos = (self.pos + pad).min(self.buf.len());
        }
        Ok((first, payload))
    }
}

fn numeric(ty: u32, bytes: &[u8]) -> Result<Vec<f64>> {
    macro_rules! conv {
        ($t:ty) => {
            bytes
                .chunks_exact(std::mem::size_of::<$t>())
                .map(|c| <$t>::from_le_bytes(c.try_into().expect("chunk size")) as f64)
                .collect()
        };
    }
    Ok(match ty {
        MI_INT8 => bytes.iter().map(|&b| b as i8 as f64).collect(),
        MI_UINT8 => bytes.iter().map(|&b| b as f64).collect(),
        MI_INT16 => conv!(i16),
        MI_UINT16 => conv!(u16),
        MI_INT32 => conv!(i32),
        MI_UINT32 => conv!(u32),
        MI_SINGLE => conv!(f32),
        MI_DOUBLE => conv!(f64),
        MI_INT64 => conv!(i64),
        MI_UINT64 => conv!(u64),
        other => return Err(Error::Data(format!("unsupported MAT data type {other}"))),
    })
}

fn parse_matrix(body: &[u8]) -> Result<Option<(String, MatArray)>> {
    let mut cur = Cursor { buf: body, pos: 0 };
    let (_, flags) = cur.element()?;
    let class = flags.first().copied().unwrap_or(0);
    // Numeric classes are 6 (double) through 15 (uint64); skip cells, structs, chars.
    if !(6..=15).contains(&class) {
        return Ok(None);
    }
    let (dty, dims) = cur.element()?;
    let dims: Vec<usize> = numeric(dty, dims)?
        .into_iter()
        .map(|d| d as usize)
        .collect();
    let (_, name) = cur.element()?;
    let name = String::from_utf8_lossy(name).into_owned();
    let (ty, real) = cur.element()?;
    let data = numeric(ty, real)?;
    if data.len() != dims.iter().product::<usize>() {
        return Err(Error::Data(format!(
            "MAT variable {name} has {} values for dims {dims:?}",
            data.len()
        )));
    }
    Ok(Some((name, MatArray { dims, data })))
}

fn collect_elements(buf: &[u8], out: &mut HashMap<String, MatArray>) -> Result<()> {
    let mut cur = Cursor { buf, pos: 0 };
    while cur.pos + 8 <= buf.len() {
        let (ty, payload) = cur.element()?;
        match ty {
            MI_COMPRESSED => {
                let mut inflated = Vec::new();
                ZlibDecoder::new(payload)
                    .read_to_end(&mut inflated)
                    .map_err(|e| Error::Data(format!("corrupt compressed MAT element: {e}")))?;
                collect_elements(&inflated, out)?;
            }
            MI_MATRIX => {
                if let Some((name, arr)) = parse_matrix(payload)? {
                    out.insert(name, arr);
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Numeric variables of a little-endian MATLAB level-5 file.
pub fn read_mat_variables(bytes: &[u8]) -> Result<HashMap<String, MatArray>> {
    if bytes.len() < 128 {
        return Err(Error::Data("MAT file shorter than its header".into()));
    }
    if &bytes[126..128] != b"IM" {
        return Err(Error::Data(
            "only little-endian level-5 MAT files are supported".into(),
        ));
    }
    let mut vars = HashMap::new();
    collect_elements(&bytes[128..], &mut vars)?;
    Ok(vars)
}

/// Reads an SVHN cropped-digit file (`train_32x32.mat` / `test_32x32.mat`).
/// Digit label 10 denotes zero; class `d` is digit `d`.
pub fn load_svhn_mat(path: &Path, split: Split) -> Result<DatasetSplit> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let vars = read_mat_variables(&bytes)?;
    let missing = |v: &str| Error::Data(format!("{} has no variable {v}", path.display()));
    let x = vars.get("X").ok_or_else(|| missing("X"))?;
    let y = vars.get("y").ok_or_else(|| missing("y"))?;
    if x.dims.len() != 4 || x.dims[2] != 3 {
        return Err(Error::Data(format!(
            "SVHN X has dims {:?}, expected (H, W, 3, N)",
            x.dims
        )));
    }
    let (h, w, n) = (x.dims[0], x.dims[1], x.dims[3]);
    if y.data.len() != n {
        return Err(Error::shape("SVHN labels", n, y.data.len()));
    }
    let labels = y
        .data
        .iter()
        .map(|&v| match v as i64 {
            d @ 1..=10 => Ok((d % 10) as usize),
            other => Err(Error::Data(format!("SVHN label {other} out of range"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let plane = h * w;
    let images = Array4::from_shape_fn((n, h, w, 3), |(i, r, c, ch)| {
        normalize_u8(x.data[r + h * c + plane * ch + 3 * plane * i] as u8)
    });
    DatasetSplit::new(
        images,
        labels,
        split,
        (0..10).map(|d| d.to_string()).collect(),
    )
}
