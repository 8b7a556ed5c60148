//! Reader and writer for the NPY tensor format.
//!
//! Reads versions 1.0 and 2.0 with little-endian `f4`/`f8` payloads in C order,
//! one or two dimensions. Writes version 1.0 `<f8` only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    rows: usize,
    cols: usize,
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes)
}

pub fn write_npy(matrix: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_npy(matrix)).map_err(|e| Error::io(path, e))
}

/// Decodes an in-memory NPY file.
pub fn parse_npy(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format("missing \\x93NUMPY magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, prefix) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Format("file too short for v2 header length".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        _ => {
            return Err(Error::Format(format!(
                "unsupported format version {major}.{minor}"
            )))
        }
    };
    if major == 3 {
        return Err(Error::Format("format version 3.0 (utf-8 header) is not supported".into()));
    }
    let data_start = prefix + header_len;
    if bytes.len() < data_start {
        return Err(Error::Format(format!(
            "header declares {header_len} bytes but file ends early"
        )));
    }
    let text = std::str::from_utf8(&bytes[prefix..data_start])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let header = parse_header(text)?;

    let count = header.rows * header.cols;
    let expected = count * header.dtype.size();
    let payload = &bytes[data_start..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
    };
    DenseMatrix::from_vec(header.rows, header.cols, data)
}

/// Encodes a matrix as an NPY v1.0 `<f8` file.
pub fn encode_npy(matrix: &DenseMatrix) -> Vec<u8> {
    let mut dict = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        matrix.rows(),
        matrix.cols()
    );
    // magic + version + u16 length + dict + '\n' must be a multiple of ALIGN
    let unpadded = 10 + dict.len() + 1;
    let padded = unpadded.div_ceil(ALIGN) * ALIGN;
    dict.extend(std::iter::repeat_n(' ', padded - unpadded));
    dict.push('\n');

    let mut out = Vec::with_capacity(padded + 8 * matrix.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    for v in matrix.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn parse_header(text: &str) -> Result<Header> {
    let body = text.trim_end_matches(['\n', ' ', '\0']).trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| Error::Format(format!("header is not a dict literal: {body:?}")))?;

    let descr = dict_value(body, "descr")?;
    let fortran = dict_value(body, "fortran_order")?;
    let shape = dict_value(body, "shape")?;

    let descr = descr
        .strip_prefix('\'')
        .and_then(|d| d.strip_suffix('\''))
        .or_else(|| descr.strip_prefix('"').and_then(|d| d.strip_suffix('"')))
        .ok_or_else(|| Error::Format(format!("descr is not a string: {descr}")))?;
    let dtype = match descr {
        "<f8" => Dtype::F8,
        "<f4" => Dtype::F4,
        other => {
            return Err(Error::UnsupportedLayout(format!(
                "dtype {other:?} (only '<f4' and '<f8' are supported)"
            )))
        }
    };

    match fortran {
        "False" => {}
        "True" => return Err(Error::UnsupportedLayout("fortran_order is True".into())),
        other => return Err(Error::Format(format!("fortran_order is not a bool: {other}"))),
    }

    let dims = parse_shape(shape)?;
    let (rows, cols) = match dims.as_slice() {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => {
            return Err(Error::UnsupportedLayout(format!(
                "{}-dimensional array (only 1-D and 2-D are supported)",
                dims.len()
            )))
        }
    };
    if rows == 0 || cols == 0 {
        return Err(Error::Shape(format!("empty array with shape {shape}")));
    }
    Ok(Header { dtype, rows, cols })
}

/// Extracts the raw text of the value stored under `key` in a Python dict literal body.
fn dict_value<'a>(body: &'a str, key: &str) -> Result<&'a str> {
    let missing = || Error::Format(format!("header has no '{key}' entry"));
    let start = ["'", "\""]
        .iter()
        .find_map(|q| body.find(&format!("{q}{key}{q}")))
        .ok_or_else(missing)?;
    let rest = &body[start + key.len() + 2..];
    let rest = rest.trim_start().strip_prefix(':').ok_or_else(missing)?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else if let Some(q) = rest.chars().next().filter(|c| *c == '\'' || *c == '"') {
        rest[1..].find(q).map(|i| i + 2)
    } else {
        Some(rest.find(',').unwrap_or(rest.len()))
    }
    .ok_or_else(|| Error::Format(format!("unterminated value for '{key}'")))?;
    Ok(rest[..end].trim())
}

fn parse_shape(shape: &str) -> Result<Vec<usize>> {
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Format(format!("shape is not a tuple: {shape}")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape entry {s:?}")))
        })
        .collect()
}
