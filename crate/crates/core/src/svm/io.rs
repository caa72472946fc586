//! `PLSV` model files.
//!
//! Layout (little-endian): `PLSV` | version u32 | header text | per-class records.
//! Text blocks are u64-length-prefixed UTF-8 `key=value` lines. Each record is a
//! text header (`C`, `tol`, `n`, `b`, `converged`, `iterations`, `kkt_gap`)
//! followed by `n` α values (f64), `n` signs (i8) and `n` index-map entries (u64).

use std::path::Path;

use super::{BinarySvmModel, MulticlassSvmModel};
use crate::binio::{parse_key_values, put_f64s, put_header, put_text, put_u64, Reader};
use crate::dataio::DataError;

pub const PLSV_MAGIC: &[u8; 4] = b"PLSV";

pub(crate) fn encode_binary(buf: &mut Vec<u8>, m: &BinarySvmModel) {
    let header = format!(
        "C={:?}\ntol={:?}\nn={}\nb={:?}\nconverged={}\niterations={}\nkkt_gap={:?}\n",
        m.c,
        m.tol,
        m.n_train(),
        m.b,
        m.converged,
        m.iterations,
        m.kkt_gap
    );
    put_text(buf, &header);
    put_f64s(buf, &m.alpha);
    buf.extend(m.y.iter().map(|&s| if s > 0.0 { 1u8 } else { 0xFF }));
    for &i in &m.train_index_map {
        put_u64(buf, i as u64);
    }
}

fn field<'a>(kv: &'a [(String, String)], key: &str, at: usize) -> Result<&'a str, DataError> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| DataError::Malformed {
            offset: at,
            reason: format!("missing header key {key:?}"),
        })
}

fn parse_field<T: std::str::FromStr>(
    kv: &[(String, String)],
    key: &str,
    at: usize,
) -> Result<T, DataError> {
    let raw = field(kv, key, at)?;
    raw.parse().map_err(|_| DataError::Malformed {
        offset: at,
        reason: format!("bad value {raw:?} for {key:?}"),
    })
}

pub(crate) fn header_kv(r: &mut Reader<'_>) -> Result<(usize, Vec<(String, String)>), DataError> {
    let at = r.offset();
    let text = r.text()?;
    let kv = parse_key_values(&text).map_err(|(line, reason)| DataError::Malformed {
        offset: at,
        reason: format!("header line {line}: {reason}"),
    })?;
    Ok((at, kv))
}

pub(crate) fn decode_binary(r: &mut Reader<'_>) -> Result<BinarySvmModel, DataError> {
    let (at, kv) = header_kv(r)?;
    let c: f64 = parse_field(&kv, "C", at)?;
    let tol: f64 = parse_field(&kv, "tol", at)?;
    let n: usize = parse_field(&kv, "n", at)?;
    let b: f64 = parse_field(&kv, "b", at)?;
    let converged: bool = parse_field(&kv, "converged", at)?;
    let iterations: u64 = parse_field(&kv, "iterations", at)?;
    let kkt_gap: f64 = parse_field(&kv, "kkt_gap", at)?;
    if !(c > 0.0 && c.is_finite() && b.is_finite()) {
        return Err(DataError::Malformed {
            offset: at,
            reason: "C must be positive and b finite".into(),
        });
    }
    if n.checked_mul(17).is_none_or(|bytes| bytes > r.remaining()) {
        return Err(DataError::TruncatedPayload {
            offset: r.offset() + r.remaining(),
            expected: r.offset().saturating_add(n.saturating_mul(17)),
        });
    }
    let alpha_at = r.offset();
    let alpha = r.f64s_finite(n)?;
    if let Some(i) = alpha.iter().position(|&a| !(0.0..=c).contains(&a)) {
        return Err(DataError::Malformed {
            offset: alpha_at + 8 * i,
            reason: format!("α = {} outside [0, C]", alpha[i]),
        });
    }
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.offset();
        y.push(match r.u8()? {
            1 => 1.0,
            0xFF => -1.0,
            other => {
                return Err(DataError::Malformed {
                    offset: at,
                    reason: format!("sign byte {other:#x}"),
                })
            }
        });
    }
    let mut train_index_map = Vec::with_capacity(n);
    for _ in 0..n {
        train_index_map.push(r.u64()? as usize);
    }
    let support_indices = (0..n).filter(|&i| alpha[i] > 0.0).collect();
    Ok(BinarySvmModel {
        alpha,
        y,
        b,
        c,
        tol,
        support_indices,
        train_index_map,
        converged,
        iterations,
        kkt_gap,
    })
}

pub(crate) fn encode_multiclass_into(buf: &mut Vec<u8>, m: &MulticlassSvmModel) {
    put_text(buf, &format!("kind=ovr\nclasses={}\n", m.n_classes));
    for model in &m.per_class {
        encode_binary(buf, model);
    }
}

pub(crate) fn decode_multiclass_from(r: &mut Reader<'_>) -> Result<MulticlassSvmModel, DataError> {
    let (at, kv) = header_kv(r)?;
    if field(&kv, "kind", at)? != "ovr" {
        return Err(DataError::Malformed {
            offset: at,
            reason: "only kind=ovr models are supported".into(),
        });
    }
    let n_classes: usize = parse_field(&kv, "classes", at)?;
    if n_classes < 2 {
        return Err(DataError::Malformed {
            offset: at,
            reason: format!("{n_classes} classes"),
        });
    }
    let per_class = (0..n_classes)
        .map(|_| decode_binary(r))
        .collect::<Result<Vec<_>, _>>()?;
    if per_class
        .iter()
        .any(|m| m.n_train() != per_class[0].n_train())
    {
        return Err(DataError::Malformed {
            offset: at,
            reason: "per-class models disagree on training size".into(),
        });
    }
    Ok(MulticlassSvmModel {
        per_class,
        n_classes,
    })
}

pub fn encode_multiclass(m: &MulticlassSvmModel) -> Vec<u8> {
    let mut buf = Vec::new();
    put_header(&mut buf, PLSV_MAGIC, 1);
    encode_multiclass_into(&mut buf, m);
    buf
}

pub fn decode_multiclass(bytes: &[u8]) -> Result<MulticlassSvmModel, DataError> {
    let mut r = Reader::new(bytes);
    r.header(PLSV_MAGIC)?;
    let m = decode_multiclass_from(&mut r)?;
    r.finish()?;
    Ok(m)
}

pub fn save_multiclass(m: &MulticlassSvmModel, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, encode_multiclass(m)).map_err(|e| DataError::io(path, e))
}

pub fn load_multiclass(path: impl AsRef<Path>) -> Result<MulticlassSvmModel, DataError> {
    let path = path.as_ref();
    decode_multiclass(&std::fs::read(path).map_err(|e| DataError::io(path, e))?)
}
