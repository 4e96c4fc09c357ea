//! Tensor file ingestion: raw dumps and a read-only safetensors subset.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

use ztbe_core::bf16::Bf16Word;
use ztbe_core::codec::WeightMatrix;

/// Read a raw tensor file: rows u32, cols u32, then rows*cols
/// little-endian 16-bit words, row-major.
pub fn read_raw_tensor(path: &Path) -> Result<WeightMatrix> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(
        bytes.len() >= 8,
        "{}: too short for a raw tensor header",
        path.display()
    );
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = 8 + 2 * rows as u64 * cols as u64;
    ensure!(
        bytes.len() as u64 == expected,
        "{}: {} bytes for a {rows}x{cols} tensor, expected {expected}",
        path.display(),
        bytes.len()
    );
    let data = bytes[8..]
        .chunks_exact(2)
        .map(|c| Bf16Word(u16::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(WeightMatrix::new(rows, cols, data)?)
}

pub fn write_raw_tensor(path: &Path, matrix: &WeightMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 2 * matrix.data().len());
    bytes.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
    for word in matrix.data() {
        bytes.extend_from_slice(&word.bits().to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// One tensor described by a safetensors header.
#[derive(Debug, Clone)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    /// Byte range within the data region.
    pub start: usize,
    pub end: usize,
}

/// A parsed safetensors file: 8-byte little-endian header length, JSON
/// header, then the raw data region. Read-only, and only BF16 tensors can
/// be turned into matrices.
pub struct SafetensorsFile {
    pub entries: Vec<TensorEntry>,
    data: Vec<u8>,
}

pub fn read_safetensors(path: &Path) -> Result<SafetensorsFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(
        bytes.len() >= 8,
        "{}: too short for a safetensors header",
        path.display()
    );
    let header_len = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    ensure!(
        header_len.checked_add(8).is_some_and(|end| end <= bytes.len() as u64),
        "{}: header length {header_len} exceeds file size {}",
        path.display(),
        bytes.len()
    );
    let header_end = 8 + header_len as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[8..header_end])
        .with_context(|| format!("{}: header is not valid JSON", path.display()))?;
    let object = header
        .as_object()
        .with_context(|| format!("{}: header is not a JSON object", path.display()))?;
    let data = bytes[header_end..].to_vec();

    let mut entries = Vec::new();
    for (name, value) in object {
        if name == "__metadata__" {
            continue;
        }
        let dtype = value
            .get("dtype")
            .and_then(|v| v.as_str())
            .with_context(|| format!("tensor {name}: missing dtype"))?
            .to_string();
        let shape: Vec<usize> = value
            .get("shape")
            .and_then(|v| v.as_array())
            .with_context(|| format!("tensor {name}: missing shape"))?
            .iter()
            .map(|v| {
                v.as_u64()
                    .map(|n| n as usize)
                    .with_context(|| format!("tensor {name}: non-integer shape entry"))
            })
            .collect::<Result<_>>()?;
        let offsets = value
            .get("data_offsets")
            .and_then(|v| v.as_array())
            .filter(|a| a.len() == 2)
            .with_context(|| format!("tensor {name}: missing data_offsets"))?;
        let start = offsets[0]
            .as_u64()
            .with_context(|| format!("tensor {name}: bad offset"))? as usize;
        let end = offsets[1]
            .as_u64()
            .with_context(|| format!("tensor {name}: bad offset"))? as usize;
        ensure!(
            start <= end && end <= data.len(),
            "tensor {name}: offsets [{start}, {end}) outside data region of {} bytes",
            data.len()
        );
        entries.push(TensorEntry {
            name: name.clone(),
            dtype,
            shape,
            start,
            end,
        });
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(SafetensorsFile { entries, data })
}

impl SafetensorsFile {
    pub fn entry(&self, name: &str) -> Result<&TensorEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .with_context(|| format!("tensor {name} not present"))
    }

    /// Materialize one tensor as a weight matrix. Rank-1 shapes become a
    /// single row.
    pub fn matrix(&self, entry: &TensorEntry) -> Result<WeightMatrix> {
        ensure!(
            entry.dtype == "BF16",
            "tensor {}: dtype {} not supported, only BF16",
            entry.name,
            entry.dtype
        );
        let (rows, cols) = match entry.shape[..] {
            [n] => (1, n),
            [r, c] => (r, c),
            _ => bail!(
                "tensor {}: rank {} not supported, expected 1 or 2",
                entry.name,
                entry.shape.len()
            ),
        };
        let span = entry.end - entry.start;
        ensure!(
            span == 2 * rows * cols,
            "tensor {}: {span} data bytes for shape {rows}x{cols}",
            entry.name
        );
        let data = self.data[entry.start..entry.end]
            .chunks_exact(2)
            .map(|c| Bf16Word(u16::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Ok(WeightMatrix::new(rows, cols, data)?)
    }
}
