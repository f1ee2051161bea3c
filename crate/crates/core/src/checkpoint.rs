//! Flat binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        5 bytes   e.g. "SRNN1" or "VRNN1"
//! meta_len     u32       length of the metadata block
//! meta         utf-8     "key=value\n" lines
//! n_arrays     u32
//! per array:
//!   name_len   u16, name utf-8
//!   ndim       u8, dims u64 × ndim
//!   data       f64 × prod(dims)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ParamView;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl From<ParamView<'_>> for NamedArray {
    fn from(v: ParamView<'_>) -> Self {
        NamedArray { name: v.name, shape: v.shape, data: v.data.to_vec() }
    }
}

impl NamedArray {
    pub fn to_matrix(&self) -> std::result::Result<Matrix, String> {
        match self.shape[..] {
            [r, c] => Ok(Matrix::from_vec(r, c, self.data.clone())),
            _ => Err(format!("{}: expected a 2-d array, got shape {:?}", self.name, self.shape)),
        }
    }

    pub fn to_vector(&self, len: usize) -> std::result::Result<Vec<f64>, String> {
        if self.shape != [len] {
            return Err(format!("{}: expected shape [{len}], got {:?}", self.name, self.shape));
        }
        Ok(self.data.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub magic: [u8; 5],
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn meta_value(&self, key: &str) -> std::result::Result<&str, String> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| format!("missing metadata key '{key}'"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.shape.len() as u8);
            for &d in &a.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &a.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 5] = r.take(5)?.try_into().expect("5 bytes");
        let meta_len = r.u32()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?).map_err(|_| "metadata is not utf-8".to_string())?;
        let meta = meta_text
            .lines()
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| format!("bad metadata line '{l}'"))
            })
            .collect::<std::result::Result<_, _>>()?;
        let n = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(n);
        for _ in 0..n {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| "array name is not utf-8".to_string())?;
            let ndim = r.take(1)?[0] as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
            let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or("array too large")?;
            let raw = r.take(count.checked_mul(8).ok_or("array too large")?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            arrays.push(NamedArray { name: name.to_string(), shape, data });
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(Container { magic, meta, arrays })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format!("truncated: need {n} bytes at offset {}, file has {}", self.pos, self.bytes.len())
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn write(path: &Path, c: &Container) -> Result<()> {
    fs::write(path, c.to_bytes())?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Container> {
    let bytes = fs::read(path)?;
    Container::from_bytes(&bytes).map_err(|msg| Error::Format { path: path.to_path_buf(), msg })
}

/// Reads just the magic tag, to dispatch between model kinds.
pub fn peek_magic(path: &Path) -> Result<[u8; 5]> {
    Ok(read(path)?.magic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let c = Container {
            magic: *b"SRNN1",
            meta: vec![("a".into(), "1".into())],
            arrays: vec![NamedArray { name: "w".into(), shape: vec![2, 2], data: vec![1.0, 2.0, 3.0, 4.0] }],
        };
        let bytes = c.to_bytes();
        let err = Container::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.contains("truncated"), "{err}");
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Container::from_bytes(&extra).is_err());
        assert_eq!(&bytes[..5], b"SRNN1");
    }

    proptest! {
        #[test]
        fn byte_round_trip(values in prop::collection::vec(any::<f64>(), 0..40), rows in 1usize..5) {
            let cols = values.len() / rows;
            let data = values[..rows * cols].to_vec();
            let c = Container {
                magic: *b"VRNN1",
                meta: vec![("activation".into(), "tanh".into())],
                arrays: vec![
                    NamedArray { name: "m".into(), shape: vec![rows, cols], data },
                    NamedArray { name: "b".into(), shape: vec![cols], data: vec![0.5; cols] },
                ],
            };
            let bytes = c.to_bytes();
            let back = Container::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            let same_bits = back.arrays[0].data.iter().zip(&c.arrays[0].data).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same_bits);
        }
    }
}
