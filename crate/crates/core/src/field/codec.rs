//! Field file formats.
//!
//! CSV: a header row `point,<p>11,<p>12,..,<p>nn` followed by one row per
//! lattice point: the point index, then the `n(n+1)/2` upper-triangle
//! components in row-major order. `<p>` is any alphabetic prefix shared by all
//! component columns (`g` for metrics, `k` for velocities). For `n > 9` the
//! indices are separated by `_`, as in `g10_11`. Points appear in index
//! order; the point count must be `N^n` for some `N`.
//!
//! Binary (little-endian):
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 4    | magic `EBTF`                     |
//! | 4      | 1    | format version, `1`              |
//! | 5      | 1    | reserved, `0`                    |
//! | 6      | 2    | matrix dimension `n` (u16)       |
//! | 8      | 4    | points per axis `N` (u32)        |
//! | 12     | 8    | lattice extent (f64)             |
//! | 20     | ...  | `N^n * n(n+1)/2` f64 components  |

use std::fmt::Write as _;

use super::{Lattice, TensorField};
use crate::error::{Error, Result};
use crate::tensor::{dim_from_sym_len, sym_len, SymMat};

pub const BINARY_MAGIC: &[u8; 4] = b"EBTF";
pub const BINARY_VERSION: u8 = 1;
const BINARY_HEADER_LEN: usize = 20;

/// Column labels for the upper triangle of an `n x n` matrix, 1-based.
pub fn component_labels(prefix: &str, n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(sym_len(n));
    for i in 1..=n {
        for j in i..=n {
            if n <= 9 {
                out.push(format!("{prefix}{i}{j}"));
            } else {
                out.push(format!("{prefix}{i}_{j}"));
            }
        }
    }
    out
}

pub fn encode_csv(field: &TensorField, prefix: &str) -> String {
    let n = field.lattice().dim();
    let mut out = String::from("point");
    for label in component_labels(prefix, n) {
        out.push(',');
        out.push_str(&label);
    }
    out.push('\n');
    for (p, v) in field.values().iter().enumerate() {
        write!(out, "{p}").unwrap();
        for c in v.upper() {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Integer `N` with `N^n == count`, if any.
fn integer_root(count: usize, n: usize) -> Option<usize> {
    if count == 0 {
        return None;
    }
    let guess = (count as f64).powf(1.0 / n as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1)
        .find(|&r| r > 0 && r.checked_pow(n as u32) == Some(count))
}

fn check_header(line: &str) -> Result<usize> {
    let mut cols = line.split(',').map(str::trim);
    if cols.next() != Some("point") {
        return Err(parse_err(1, "header must start with `point`"));
    }
    let labels: Vec<&str> = cols.collect();
    let n = dim_from_sym_len(labels.len())
        .ok_or_else(|| parse_err(1, format!("{} component columns is not n(n+1)/2", labels.len())))?;
    let prefix: String = labels[0].chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    if prefix.is_empty() {
        return Err(parse_err(1, "component labels need an alphabetic prefix"));
    }
    let expected = component_labels(&prefix, n);
    if let Some((got, want)) = labels.iter().zip(&expected).find(|(g, w)| *g != w) {
        return Err(parse_err(1, format!("expected column `{want}`, found `{got}`")));
    }
    Ok(n)
}

/// Parses the CSV field format onto a torus of the given extent.
pub fn decode_csv(text: &str, extent: f64) -> Result<TensorField> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let n = check_header(header)?;
    let m = sym_len(n);

    let mut values = Vec::new();
    let mut upper = Vec::with_capacity(m);
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let index: usize = cols
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| parse_err(line_no, "point index is not an integer"))?;
        if index != values.len() {
            return Err(parse_err(
                line_no,
                format!("expected point {}, found {index}", values.len()),
            ));
        }
        upper.clear();
        for c in cols {
            let v: f64 = c
                .parse()
                .map_err(|_| parse_err(line_no, format!("`{c}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, "component is not finite"));
            }
            upper.push(v);
        }
        if upper.len() != m {
            return Err(parse_err(
                line_no,
                format!("expected {m} components, found {}", upper.len()),
            ));
        }
        values.push(SymMat::from_upper(n, &upper)?);
    }
    let per_axis = integer_root(values.len(), n).ok_or_else(|| {
        parse_err(0, format!("{} points is not N^{n} for an integer N", values.len()))
    })?;
    TensorField::from_values(Lattice::new(n, per_axis, extent)?, values)
}

pub fn encode_binary(field: &TensorField) -> Vec<u8> {
    let lat = field.lattice();
    let m = sym_len(lat.dim());
    let mut out = Vec::with_capacity(BINARY_HEADER_LEN + 8 * m * lat.point_count());
    out.extend_from_slice(BINARY_MAGIC);
    out.push(BINARY_VERSION);
    out.push(0);
    out.extend_from_slice(&(lat.dim() as u16).to_le_bytes());
    out.extend_from_slice(&(lat.points_per_axis() as u32).to_le_bytes());
    out.extend_from_slice(&lat.extent().to_le_bytes());
    for v in field.values() {
        for c in v.upper() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<TensorField> {
    let bin_err = |message: &str| parse_err(0, message);
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(bin_err("truncated header"));
    }
    if &bytes[0..4] != BINARY_MAGIC {
        return Err(bin_err("bad magic"));
    }
    if bytes[4] != BINARY_VERSION {
        return Err(bin_err("unsupported format version"));
    }
    if bytes[5] != 0 {
        return Err(bin_err("reserved byte must be zero"));
    }
    let n = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let per_axis = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let extent = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if n == 0 || per_axis == 0 {
        return Err(bin_err("dimension and points per axis must be positive"));
    }
    let expected = per_axis
        .checked_pow(n as u32)
        .and_then(|count| count.checked_mul(sym_len(n)))
        .and_then(|comps| comps.checked_mul(8))
        .and_then(|b| b.checked_add(BINARY_HEADER_LEN))
        .ok_or_else(|| bin_err("lattice size overflows"))?;
    if bytes.len() != expected {
        return Err(bin_err("payload length does not match header"));
    }
    let lattice = Lattice::new(n, per_axis, extent)?;
    let m = sym_len(n);
    let mut upper = Vec::with_capacity(m);
    let values = bytes[BINARY_HEADER_LEN..]
        .chunks_exact(8 * m)
        .map(|chunk| {
            upper.clear();
            upper.extend(
                chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap())),
            );
            SymMat::from_upper(n, &upper)
        })
        .collect::<Result<Vec<_>>>()?;
    TensorField::from_values(lattice, values)
}
