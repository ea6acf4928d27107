//! Field dumps.
//!
//! Binary layout, all little-endian: the 8 bytes `LOGSPF64`, `L` as f64,
//! `n` as u64, then `n²` f64 values in row-major order (`x` index outer).
//! Text layout: a header line `# L n`, then `n` lines of `n`
//! space-separated values, written with round-trip precision.

use std::path::Path;

use logsp::grid::{make_grid, Field2D};

use crate::config::FieldFormat;
use crate::output::write_atomic;
use crate::CliError;

const MAGIC: &[u8; 8] = b"LOGSPF64";

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Core(logsp::Error::Format(msg.into()))
}

pub fn encode_binary(field: &Field2D) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(24 + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&g.half_width().to_le_bytes());
    out.extend_from_slice(&(g.n() as u64).to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Field2D, CliError> {
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(bad("not a binary field dump"));
    }
    let word = |k: usize| -> [u8; 8] { bytes[k..k + 8].try_into().unwrap() };
    let half_width = f64::from_le_bytes(word(8));
    let n = u64::from_le_bytes(word(16)) as usize;
    if n.checked_mul(n).and_then(|m| m.checked_mul(8)).map(|m| m + 24) != Some(bytes.len()) {
        return Err(bad(format!("binary field dump with n = {n} has {} bytes", bytes.len())));
    }
    let values = (0..n * n).map(|k| f64::from_le_bytes(word(24 + 8 * k))).collect();
    Ok(Field2D::new(make_grid(half_width, n)?, values)?)
}

pub fn encode_text(field: &Field2D) -> String {
    let g = field.grid();
    let n = g.n();
    let mut out = format!("# {:?} {}\n", g.half_width(), n);
    for row in field.values().chunks(n) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn decode_text(text: &str) -> Result<Field2D, CliError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty field dump"))?;
    let parts: Vec<&str> = header.trim_start_matches('#').split_whitespace().collect();
    if !header.starts_with('#') || parts.len() != 2 {
        return Err(bad("field dump header must be `# L n`"));
    }
    let half_width: f64 = parts[0].parse().map_err(|_| bad(format!("bad L in header: {}", parts[0])))?;
    let n: usize = parts[1].parse().map_err(|_| bad(format!("bad n in header: {}", parts[1])))?;
    let mut values = Vec::with_capacity(n * n);
    for (row, line) in lines.enumerate() {
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| bad(format!("bad value `{tok}` on row {row}")))?);
        }
        if values.len() - before != n {
            return Err(bad(format!("row {row} has {} values, expected {n}", values.len() - before)));
        }
    }
    if values.len() != n * n {
        return Err(bad(format!("expected {n} rows")));
    }
    Ok(Field2D::new(make_grid(half_width, n)?, values)?)
}

pub fn write_field(path: &Path, field: &Field2D, format: FieldFormat) -> Result<(), CliError> {
    match format {
        FieldFormat::Binary => write_atomic(path, &encode_binary(field))?,
        FieldFormat::Text => write_atomic(path, encode_text(field).as_bytes())?,
    }
    Ok(())
}

/// Reads either layout, telling them apart by the magic bytes.
pub fn read_field(path: &Path) -> Result<Field2D, CliError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        decode_text(std::str::from_utf8(&bytes).map_err(|_| bad("field dump is neither binary nor text"))?)
    }
}

pub fn field_file_name(format: FieldFormat) -> &'static str {
    match format {
        FieldFormat::Binary => "field.bin",
        FieldFormat::Text => "field.txt",
    }
}
