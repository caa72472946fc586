//! Little-endian framing shared by every binary format in the crate.

use crate::dataio::DataError;

pub(crate) fn put_header(buf: &mut Vec<u8>, magic: &[u8; 4], version: u32) {
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&version.to_le_bytes());
}

pub(crate) fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    buf.reserve(vs.len() * 8);
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Length-prefixed UTF-8 blob.
pub(crate) fn put_text(buf: &mut Vec<u8>, s: &str) {
    put_u64(buf, s.len() as u64);
    buf.extend_from_slice(s.as_bytes());
}

/// Byte reader that tracks its offset so every error can name where it happened.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.remaining() < n {
            return Err(DataError::TruncatedPayload {
                offset: self.bytes.len(),
                expected: self.pos + n,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    /// Checks magic and version; only version 1 exists.
    pub(crate) fn header(&mut self, magic: &[u8; 4]) -> Result<u32, DataError> {
        let found = self.take(4)?;
        if found != magic {
            return Err(DataError::BadMagic {
                offset: 0,
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let at = self.pos;
        let version = self.u32()?;
        if version != 1 {
            return Err(DataError::UnsupportedVersion {
                offset: at,
                version,
            });
        }
        Ok(version)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, DataError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads a u64 count and checks it fits in memory terms of the remaining payload.
    pub(crate) fn count(&mut self, elem_size: usize) -> Result<usize, DataError> {
        let at = self.pos;
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| DataError::Malformed {
            offset: at,
            reason: format!("count {n} does not fit in memory"),
        })?;
        if elem_size > 0
            && n.checked_mul(elem_size)
                .is_none_or(|b| b > self.remaining())
        {
            return Err(DataError::TruncatedPayload {
                offset: self.bytes.len(),
                expected: self.pos.saturating_add(n.saturating_mul(elem_size)),
            });
        }
        Ok(n)
    }

    pub(crate) fn f64_finite(&mut self) -> Result<f64, DataError> {
        let at = self.pos;
        let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(DataError::NonFiniteValue { offset: at });
        }
        Ok(v)
    }

    pub(crate) fn f64s_finite(&mut self, n: usize) -> Result<Vec<f64>, DataError> {
        let start = self.pos;
        let raw = self.take(n.checked_mul(8).ok_or(DataError::TruncatedPayload {
            offset: self.bytes.len(),
            expected: usize::MAX,
        })?)?;
        raw.chunks_exact(8)
            .enumerate()
            .map(|(i, c)| {
                let v = f64::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(DataError::NonFiniteValue {
                        offset: start + 8 * i,
                    })
                }
            })
            .collect()
    }

    pub(crate) fn text(&mut self) -> Result<String, DataError> {
        let len = self.count(1)?;
        let at = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| DataError::Malformed {
            offset: at,
            reason: "text block is not valid UTF-8".into(),
        })
    }

    pub(crate) fn finish(&self) -> Result<(), DataError> {
        if self.remaining() != 0 {
            return Err(DataError::Malformed {
                offset: self.pos,
                reason: format!("{} trailing bytes", self.remaining()),
            });
        }
        Ok(())
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub(crate) fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err((i + 1, format!("expected key=value, found {line:?}")));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
