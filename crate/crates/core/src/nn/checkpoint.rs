//! Binary checkpoint encoding.
//!
//! ```text
//! "NESTCKPT"            8 bytes magic
//! version               u32 LE
//! entry count           u32 LE
//! per entry:
//!   name length         u32 LE, then UTF-8 name
//!   rank                u32 LE, then rank × u32 LE dims
//!   data                product(dims) × f32 LE
//! ```

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"NESTCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("corrupt: bad magic")]
    BadMagic,
    #[error("unsupported version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("corrupt: short read")]
    ShortRead,
    #[error("corrupt: parameter name is not UTF-8")]
    BadName,
    #[error("corrupt: {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("corrupt: shape {shape:?} of {name} does not match {len} values")]
    BadShape {
        name: String,
        shape: Vec<usize>,
        len: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode(entries: &[CheckpointEntry]) -> Result<Vec<u8>, CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        if e.shape.iter().product::<usize>() != e.data.len() {
            return Err(CheckpointError::BadShape {
                name: e.name.clone(),
                shape: e.shape.clone(),
                len: e.data.len(),
            });
        }
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &e.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::ShortRead)?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::ShortRead)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<CheckpointEntry>, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(8).map_err(|_| CheckpointError::BadMagic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::BadName)?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::new();
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(CheckpointError::ShortRead)?;
        let raw = r.take(n.checked_mul(4).ok_or(CheckpointError::ShortRead)?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(CheckpointEntry { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Vec<CheckpointEntry> {
        vec![
            CheckpointEntry {
                name: "policy.0.weight".into(),
                shape: vec![2, 3],
                data: vec![1.0, -2.5, 0.0, f32::MIN_POSITIVE, 3.25, -0.0],
            },
            CheckpointEntry {
                name: "policy.0.bias".into(),
                shape: vec![2],
                data: vec![0.5, 0.25],
            },
        ]
    }

    #[test]
    fn save_load_save_identical() {
        let a = encode(&sample()).unwrap();
        let b = encode(&decode(&a).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[..8], b"NESTCKPT");
    }

    #[test]
    fn truncated_is_short_read() {
        let a = encode(&sample()).unwrap();
        for cut in [12, 20, a.len() - 1] {
            let err = decode(&a[..cut]).unwrap_err();
            assert_eq!(err, CheckpointError::ShortRead);
            assert_eq!(err.to_string(), "corrupt: short read");
        }
    }

    #[test]
    fn version_mismatch() {
        let mut a = encode(&sample()).unwrap();
        a[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = decode(&a).unwrap_err();
        assert_eq!(err, CheckpointError::UnsupportedVersion(7));
        assert!(err.to_string().starts_with("unsupported version"));
    }

    #[test]
    fn bad_magic() {
        let mut a = encode(&sample()).unwrap();
        a[0] = b'X';
        assert_eq!(decode(&a), Err(CheckpointError::BadMagic));
        assert_eq!(decode(b"NEST"), Err(CheckpointError::BadMagic));
    }

    proptest! {
        #[test]
        fn roundtrip_bits(vals in proptest::collection::vec(any::<u32>(), 0..64)) {
            let e = vec![CheckpointEntry {
                name: "x".into(),
                shape: vec![vals.len()],
                data: vals.iter().map(|&b| f32::from_bits(b)).collect(),
            }];
            let bytes = encode(&e).unwrap();
            let back = decode(&bytes).unwrap();
            let bits: Vec<u32> = back[0].data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, vals);
            prop_assert_eq!(encode(&back).unwrap(), bytes);
        }
    }
}
