//! PLRF feature files, PLRK kernel caches, label and split text files.
//!
//! PLRF layout: `PLRF` | version u32 | n_samples u64 | n_dims u64 | f32 payload,
//! all little-endian, row-major. PLRK is the same with a single `n` and an
//! `n × n` f64 payload.

use std::fs;
use std::path::Path;

use super::{DataError, FeatureMatrix, LabelVector, SplitDefinition};
use crate::binio::{put_header, put_u64, Reader};
use crate::matrix::Matrix;

pub const PLRF_MAGIC: &[u8; 4] = b"PLRF";
pub const PLRK_MAGIC: &[u8; 4] = b"PLRK";
pub const PLRF_HEADER_LEN: usize = 24;

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|e| DataError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

pub fn encode_feature_matrix(m: &FeatureMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(PLRF_HEADER_LEN + 4 * m.values().len());
    put_header(&mut buf, PLRF_MAGIC, 1);
    put_u64(&mut buf, m.n_samples() as u64);
    put_u64(&mut buf, m.n_dims() as u64);
    for v in m.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn read_feature_matrix(bytes: &[u8]) -> Result<FeatureMatrix, DataError> {
    let mut r = Reader::new(bytes);
    r.header(PLRF_MAGIC)?;
    let n = r.u64()?;
    let d = r.u64()?;
    if n == 0 || d == 0 {
        return Err(DataError::Malformed {
            offset: 8,
            reason: format!("shape {n}x{d} has an empty axis"),
        });
    }
    let count = usize::try_from(n)
        .ok()
        .zip(usize::try_from(d).ok())
        .and_then(|(n, d)| n.checked_mul(d))
        .filter(|c| c.checked_mul(4).is_some())
        .ok_or_else(|| DataError::Malformed {
            offset: 8,
            reason: format!("shape {n}x{d} is too large"),
        })?;
    let start = r.offset();
    let payload = r.take(count * 4)?;
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(DataError::NonFiniteValue {
                offset: start + 4 * i,
            });
        }
        values.push(v);
    }
    r.finish()?;
    FeatureMatrix::new(n as usize, d as usize, values)
}

pub fn load_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix, DataError> {
    read_feature_matrix(&read_file(path.as_ref())?)
}

pub fn write_feature_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_file(path.as_ref(), &encode_feature_matrix(m))
}

pub fn encode_kernel_cache(k: &Matrix) -> Vec<u8> {
    assert!(k.is_square(), "kernel cache requires a square matrix");
    let mut buf = Vec::with_capacity(16 + 8 * k.as_slice().len());
    put_header(&mut buf, PLRK_MAGIC, 1);
    put_u64(&mut buf, k.rows() as u64);
    crate::binio::put_f64s(&mut buf, k.as_slice());
    buf
}

pub fn read_kernel_cache(bytes: &[u8]) -> Result<Matrix, DataError> {
    let mut r = Reader::new(bytes);
    r.header(PLRK_MAGIC)?;
    let n = r.u64()?;
    let count = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(n))
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| DataError::Malformed {
            offset: 8,
            reason: format!("kernel size {n} is too large"),
        })?;
    if n == 0 {
        return Err(DataError::Malformed {
            offset: 8,
            reason: "empty kernel".into(),
        });
    }
    let values = r.f64s_finite(count)?;
    r.finish()?;
    Ok(Matrix::from_vec(n as usize, n as usize, values))
}

pub fn load_kernel_cache(path: impl AsRef<Path>) -> Result<Matrix, DataError> {
    read_kernel_cache(&read_file(path.as_ref())?)
}

pub fn write_kernel_cache(k: &Matrix, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_file(path.as_ref(), &encode_kernel_cache(k))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_labels(&text)
}

pub(crate) fn parse_labels(text: &str) -> Result<LabelVector, DataError> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let token = line.trim();
        match token.parse::<i64>() {
            Ok(v) if v < 0 => return Err(DataError::NegativeLabel { line: line_no }),
            Ok(v) => labels.push(usize::try_from(v).map_err(|_| DataError::ParseError {
                line: line_no,
                text: token.to_string(),
            })?),
            Err(_) => {
                return Err(DataError::ParseError {
                    line: line_no,
                    text: token.to_string(),
                })
            }
        }
    }
    LabelVector::new(labels)
}

pub fn write_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels.labels() {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    write_file(path.as_ref(), text.as_bytes())
}

/// Parses `<index>,<train|test>` lines, checking indices against `n_samples`.
pub fn load_split(
    path: impl AsRef<Path>,
    split_id: usize,
    n_samples: usize,
) -> Result<SplitDefinition, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_split(&text, split_id, n_samples)
}

pub(crate) fn parse_split(
    text: &str,
    split_id: usize,
    n_samples: usize,
) -> Result<SplitDefinition, DataError> {
    let mut seen = vec![false; n_samples];
    let mut split = SplitDefinition {
        split_id,
        train_indices: Vec::new(),
        test_indices: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, role) = line.split_once(',').ok_or_else(|| DataError::ParseError {
            line: line_no,
            text: line.to_string(),
        })?;
        let index: usize = idx.trim().parse().map_err(|_| DataError::ParseError {
            line: line_no,
            text: line.to_string(),
        })?;
        let target = match role.trim() {
            "train" => &mut split.train_indices,
            "test" => &mut split.test_indices,
            other => {
                return Err(DataError::UnknownRole {
                    line: line_no,
                    role: other.to_string(),
                })
            }
        };
        if index >= n_samples {
            return Err(DataError::IndexOutOfRange {
                line: line_no,
                index,
                n_samples,
            });
        }
        if std::mem::replace(&mut seen[index], true) {
            return Err(DataError::DuplicateIndex {
                line: line_no,
                index,
            });
        }
        target.push(index);
    }
    Ok(split)
}

/// Writes one line per index in ascending index order.
pub fn write_split(split: &SplitDefinition, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut rows: Vec<(usize, &str)> = split
        .train_indices
        .iter()
        .map(|&i| (i, "train"))
        .chain(split.test_indices.iter().map(|&i| (i, "test")))
        .collect();
    rows.sort_unstable();
    let mut text = String::new();
    for (i, role) in rows {
        text.push_str(&format!("{i},{role}\n"));
    }
    write_file(path.as_ref(), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_loads() {
        let mut bytes = b"PLRF".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&0f32.to_le_bytes());
        let m = read_feature_matrix(&bytes).unwrap();
        assert_eq!((m.n_samples(), m.n_dims()), (1, 1));
        assert_eq!(m.values(), &[0.0]);
    }

    #[test]
    fn zeros_2x3_is_48_bytes() {
        let m = FeatureMatrix::new(2, 3, vec![0.0; 6]).unwrap();
        assert_eq!(encode_feature_matrix(&m).len(), 48);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let m = FeatureMatrix::new(2, 3, vec![1.0; 6]).unwrap();
        let bytes = encode_feature_matrix(&m);
        let err = read_feature_matrix(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(
            matches!(err, DataError::TruncatedPayload { offset: 43, .. }),
            "{err}"
        );
    }

    #[test]
    fn bad_magic_and_version() {
        let m = FeatureMatrix::new(1, 1, vec![1.0]).unwrap();
        let mut bytes = encode_feature_matrix(&m);
        bytes[0] = b'X';
        assert!(matches!(
            read_feature_matrix(&bytes),
            Err(DataError::BadMagic { offset: 0, .. })
        ));
        let mut bytes = encode_feature_matrix(&m);
        bytes[4] = 2;
        assert!(matches!(
            read_feature_matrix(&bytes),
            Err(DataError::UnsupportedVersion {
                offset: 4,
                version: 2
            })
        ));
    }

    #[test]
    fn non_finite_names_offset() {
        let m = FeatureMatrix::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let mut bytes = encode_feature_matrix(&m);
        bytes[28..32].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            read_feature_matrix(&bytes),
            Err(DataError::NonFiniteValue { offset: 28 })
        ));
    }

    #[test]
    fn labels_parse() {
        let l = parse_labels("0\n1\n0").unwrap();
        assert_eq!(l.labels(), &[0, 1, 0]);
        assert_eq!(l.n_classes(), 2);
        assert!(matches!(
            parse_labels("0\ncat\n"),
            Err(DataError::ParseError { line: 2, .. })
        ));
        assert!(matches!(
            parse_labels("cat"),
            Err(DataError::ParseError { line: 1, .. })
        ));
        assert!(matches!(
            parse_labels("1\n-3\n"),
            Err(DataError::NegativeLabel { line: 2 })
        ));
    }

    #[test]
    fn fifty_one_classes() {
        let text: String = (0..51).map(|i| format!("{i}\n")).collect();
        assert_eq!(parse_labels(&text).unwrap().n_classes(), 51);
    }

    #[test]
    fn split_parse() {
        let s = parse_split("0,train\n1,test", 1, 2).unwrap();
        assert_eq!(s.train_indices, vec![0]);
        assert_eq!(s.test_indices, vec![1]);
        assert!(matches!(
            parse_split("0,train\n0,test", 1, 2),
            Err(DataError::DuplicateIndex { line: 2, index: 0 })
        ));
        assert!(matches!(
            parse_split("5,validation", 1, 10),
            Err(DataError::UnknownRole { line: 1, .. })
        ));
        assert!(matches!(
            parse_split("5,train", 1, 3),
            Err(DataError::IndexOutOfRange { index: 5, .. })
        ));
    }

    #[test]
    fn kernel_cache_round_trip() {
        let k = Matrix::from_vec(2, 2, vec![1.0, 0.25, 0.25, 1.0]);
        let bytes = encode_kernel_cache(&k);
        assert_eq!(&bytes[..4], b"PLRK");
        assert_eq!(bytes.len(), 16 + 32);
        assert_eq!(read_kernel_cache(&bytes).unwrap(), k);
    }
}
