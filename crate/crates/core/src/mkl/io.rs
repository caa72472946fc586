//! `PLMK` model files and the CSV solver trace.
//!
//! Layout (little-endian): `PLMK` | version u32 | header text (`norm_mode`,
//! `kernels`, `converged`) | β (f64 × K) | K kernel ids (text) | trace count u64
//! and `(iteration u64, theta f64, gap f64)` rows | embedded one-vs-rest SVM in
//! the `PLSV` record layout.

use std::path::Path;

use super::{MklModel, NormMode, TraceEntry};
use crate::binio::{put_f64s, put_header, put_text, put_u64, Reader};
use crate::dataio::DataError;
use crate::svm::io::{decode_multiclass_from, encode_multiclass_into, header_kv};

pub const PLMK_MAGIC: &[u8; 4] = b"PLMK";

pub fn encode_mkl_model(m: &MklModel) -> Vec<u8> {
    let mut buf = Vec::new();
    put_header(&mut buf, PLMK_MAGIC, 1);
    put_text(
        &mut buf,
        &format!(
            "norm_mode={}\nkernels={}\nconverged={}\n",
            m.norm_mode.as_str(),
            m.beta.len(),
            m.converged
        ),
    );
    put_f64s(&mut buf, &m.beta);
    for id in &m.kernel_ids {
        put_text(&mut buf, id);
    }
    put_u64(&mut buf, m.trace.len() as u64);
    for t in &m.trace {
        put_u64(&mut buf, t.iteration as u64);
        put_f64s(&mut buf, &[t.theta, t.gap]);
    }
    encode_multiclass_into(&mut buf, &m.fused_svm);
    buf
}

pub fn decode_mkl_model(bytes: &[u8]) -> Result<MklModel, DataError> {
    let mut r = Reader::new(bytes);
    r.header(PLMK_MAGIC)?;
    let (at, kv) = header_kv(&mut r)?;
    let get = |key: &str| {
        kv.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| DataError::Malformed {
                offset: at,
                reason: format!("missing header key {key:?}"),
            })
    };
    let malformed = |reason: String| DataError::Malformed { offset: at, reason };
    let norm_mode =
        NormMode::parse(&get("norm_mode")?).ok_or_else(|| malformed("bad norm_mode".into()))?;
    let n: usize = get("kernels")?
        .parse()
        .map_err(|_| malformed("bad kernel count".into()))?;
    let converged: bool = get("converged")?
        .parse()
        .map_err(|_| malformed("bad converged flag".into()))?;
    if n == 0 || n.checked_mul(8).is_none_or(|b| b > r.remaining()) {
        return Err(malformed(format!("kernel count {n}")));
    }
    let beta_at = r.offset();
    let beta = r.f64s_finite(n)?;
    if let Some(i) = beta.iter().position(|&b| b < 0.0) {
        return Err(DataError::Malformed {
            offset: beta_at + 8 * i,
            reason: "negative kernel weight".into(),
        });
    }
    let kernel_ids = (0..n).map(|_| r.text()).collect::<Result<Vec<_>, _>>()?;
    let n_trace = r.count(24)?;
    let mut trace = Vec::with_capacity(n_trace);
    for _ in 0..n_trace {
        let iteration = r.u64()? as usize;
        let theta = r.f64_finite()?;
        let gap = r.f64_finite()?;
        trace.push(TraceEntry {
            iteration,
            theta,
            gap,
        });
    }
    let fused_svm = decode_multiclass_from(&mut r)?;
    r.finish()?;
    Ok(MklModel {
        beta,
        norm_mode,
        fused_svm,
        trace,
        kernel_ids,
        converged,
    })
}

pub fn save_mkl_model(m: &MklModel, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, encode_mkl_model(m)).map_err(|e| DataError::io(path, e))
}

pub fn load_mkl_model(path: impl AsRef<Path>) -> Result<MklModel, DataError> {
    let path = path.as_ref();
    decode_mkl_model(&std::fs::read(path).map_err(|e| DataError::io(path, e))?)
}

/// `iteration,theta,gap` with a header row.
pub fn trace_csv(m: &MklModel) -> String {
    let mut out = String::from("iteration,theta,gap\n");
    for t in &m.trace {
        out.push_str(&format!("{},{:?},{:?}\n", t.iteration, t.theta, t.gap));
    }
    out
}
