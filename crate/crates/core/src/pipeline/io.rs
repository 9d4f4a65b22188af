use std::path::Path;

use thiserror::Error;

use crate::model::{FeatureMatrix, LabelVector, Matrix};

pub const FEATURE_MAGIC: &[u8; 4] = b"DTCF";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{0}")]
    Io(String),
    #[error("bad magic {found:?}, expected \"DTCF\" (or a .csv file)")]
    BadMagic { found: Vec<u8> },
    #[error("truncated at byte {offset}: expected {expected} bytes")]
    Truncated { offset: usize, expected: usize },
    #[error("{extra} unexpected trailing bytes after byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("feature matrix is empty ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("non-finite value at row {row}, column {col}{}", offset.map(|o| format!(" (byte {o})")).unwrap_or_default())]
    NonFinite { row: usize, col: usize, offset: Option<usize> },
    #[error("CSV line {line}: {detail}")]
    Csv { line: usize, detail: String },
    #[error("labels line {line}: {detail}")]
    Labels { line: usize, detail: String },
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))
}

/// Parses the binary layout: magic, little-endian `u32` N and D, then
/// N·D little-endian `f32` values row-major.
pub fn parse_features_binary(bytes: &[u8]) -> Result<FeatureMatrix, DataError> {
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(DataError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated {
            offset: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (n, d) = (word(4), word(8));
    if n == 0 || d == 0 {
        return Err(DataError::Empty { rows: n, cols: d });
    }
    let expected = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or(DataError::Truncated {
            offset: bytes.len(),
            expected: usize::MAX,
        })?;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            offset: bytes.len(),
            expected,
        });
    }
    if bytes.len() > expected {
        return Err(DataError::TrailingBytes {
            offset: expected,
            extra: bytes.len() - expected,
        });
    }
    let mut data = Vec::with_capacity(n * d);
    for (idx, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(DataError::NonFinite {
                row: idx / d,
                col: idx % d,
                offset: Some(HEADER_LEN + 4 * idx),
            });
        }
        data.push(f64::from(v));
    }
    Ok(FeatureMatrix::new(Matrix::new(n, d, data).expect("sized above")).expect("checked finite"))
}

/// Parses CSV with a header row; every record must have the header's width.
pub fn parse_features_csv(bytes: &[u8]) -> Result<FeatureMatrix, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let width = reader
        .headers()
        .map_err(|e| DataError::Csv {
            line: 1,
            detail: e.to_string(),
        })?
        .len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| DataError::Csv {
            line,
            detail: e.to_string(),
        })?;
        if record.len() != width {
            return Err(DataError::Csv {
                line,
                detail: format!("{} fields, header has {width}", record.len()),
            });
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| DataError::Csv {
                line,
                detail: format!("column {col}: '{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: rows,
                    col,
                    offset: None,
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 || width == 0 {
        return Err(DataError::Empty { rows, cols: width });
    }
    Ok(FeatureMatrix::new(Matrix::new(rows, width, data).expect("sized above")).expect("checked finite"))
}

/// Loads a feature matrix. Files starting with the binary magic use the
/// binary layout; other files must carry a `.csv` extension.
pub fn load_features(path: &Path) -> Result<FeatureMatrix, DataError> {
    let bytes = read(path)?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if bytes.starts_with(FEATURE_MAGIC) || !is_csv {
        parse_features_binary(&bytes)
    } else {
        parse_features_csv(&bytes)
    }
}

/// Binary encoding; values are narrowed to `f32`.
pub fn encode_features(x: &FeatureMatrix) -> Vec<u8> {
    let (n, d) = (x.n_samples(), x.n_features());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * d);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for &v in x.matrix().as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn write_features(path: &Path, x: &FeatureMatrix) -> Result<(), DataError> {
    std::fs::write(path, encode_features(x))
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))
}

/// One non-negative decimal integer per line; blank lines are skipped.
pub fn parse_labels(text: &str) -> Result<LabelVector, DataError> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<usize>().map_err(|_| DataError::Labels {
            line: i + 1,
            detail: format!("'{line}' is not a non-negative integer"),
        })?);
    }
    Ok(LabelVector::new(labels))
}

pub fn load_labels(path: &Path) -> Result<LabelVector, DataError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| DataError::Labels {
        line: 0,
        detail: format!("not UTF-8: {e}"),
    })?;
    parse_labels(&text)
}

pub fn format_labels(labels: &LabelVector) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels.as_slice() {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}
