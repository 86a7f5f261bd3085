//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "SMOTCKPT"
//! version  u32      1
//! count    u32      number of tensors
//! table    count x { name_len u32, name utf-8, rows u32, cols u32 }
//! payload  every tensor's entries as f64, row-major, in table order
//! ```
//!
//! Identical tensors always serialize to identical bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 8] = b"SMOTCKPT";
pub const VERSION: u32 = 1;

/// A named, ordered set of trainable tensors.
pub trait ParamGroup {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)>;

    /// Serialized form of just this group.
    fn to_bytes(&self) -> Vec<u8> {
        let mut ck = Checkpoint::default();
        for (name, m) in self.tensors() {
            ck.push(name, m.clone());
        }
        ck.to_bytes()
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.tensors.push((name.into(), m));
    }

    /// Append every tensor of `group` as `prefix.name`.
    pub fn push_group(&mut self, prefix: &str, group: &impl ParamGroup) {
        for (name, m) in group.tensors() {
            self.push(format!("{prefix}.{name}"), m.clone());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Overwrite the tensors of `group` from `prefix.name` entries,
    /// checking shapes.
    pub fn load_group(&self, prefix: &str, group: &mut impl ParamGroup) -> Result<()> {
        for (name, m) in group.tensors_mut() {
            let key = format!("{prefix}.{name}");
            let src = self
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
            if src.shape() != m.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {key}: expected {:?}, found {:?}",
                    m.shape(),
                    src.shape()
                )));
            }
            *m = src.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, m) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        }
        for (_, m) in &self.tensors {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = cur.u32()? as usize;
        let mut table = Vec::new();
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| Error::Checkpoint("tensor name not utf-8".into()))?
                .to_string();
            let rows = cur.u32()? as usize;
            let cols = cur.u32()? as usize;
            table.push((name, rows, cols));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, rows, cols) in table {
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?;
            let raw = cur.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Matrix::from_vec(rows, cols, data)));
        }
        if cur.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}
