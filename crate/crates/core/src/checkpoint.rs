//! MFRB checkpoint files: little-endian, uncompressed, no checksum.
//!
//! ```text
//! "MFRB"  u32 version  u32 condition tag
//! u32 len  config echo (UTF-8)
//! u32 array count
//! per array: u32 len  name (UTF-8)  u32 rank  rank x u32 extents  f32 values
//! ```
//! Integrity rests on the length and shape fields; a flipped payload byte loads as a different
//! value.

use std::fs;
use std::path::Path;

use crate::agent::Condition;
use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"MFRB";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub condition: Condition,
    /// The training configuration that produced the parameters, as `key = value` text.
    pub config: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub names: Vec<String>,
    pub arrays: Vec<Tensor<f32>>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore<f32>, meta: CheckpointMeta) -> Self {
        Self {
            meta,
            names: store.names().to_vec(),
            arrays: store.params().to_vec(),
        }
    }

    /// Parameter store holding the arrays (fresh optimizer state).
    pub fn to_store(&self) -> ParamStore<f32> {
        let mut store = ParamStore::new();
        for (n, a) in self.names.iter().zip(&self.arrays) {
            store.insert(n.clone(), a.clone());
        }
        store
    }

    pub fn expect_condition(&self, cond: Condition) -> Result<()> {
        if self.meta.condition != cond {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on condition {} but {} was requested",
                self.meta.condition, cond
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        out.extend_from_slice(MAGIC);
        u32le(&mut out, VERSION as usize);
        u32le(&mut out, self.meta.condition.tag() as usize);
        u32le(&mut out, self.meta.config.len());
        out.extend_from_slice(self.meta.config.as_bytes());
        u32le(&mut out, self.arrays.len());
        for (name, a) in self.names.iter().zip(&self.arrays) {
            u32le(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            u32le(&mut out, a.shape().len());
            for &e in a.shape() {
                u32le(&mut out, e);
            }
            for v in a.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Checkpoint("bad magic: not an MFRB checkpoint".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "version mismatch: file has {version}, reader supports {VERSION}"
            )));
        }
        let tag = r.u32("condition tag")?;
        let condition =
            Condition::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown condition tag {tag}")))?;
        let clen = r.u32("config length")? as usize;
        let config = r.string(clen, "config echo")?;
        let count = r.u32("array count")? as usize;
        let mut names = Vec::new();
        let mut arrays = Vec::new();
        for k in 0..count {
            let nlen = r.u32("name length")? as usize;
            let name = r.string(nlen, "array name")?;
            let rank = r.u32("rank")? as usize;
            if rank > 8 {
                return Err(Error::Checkpoint(format!("array {name}: implausible rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| r.u32("extent").map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
            let n = n.ok_or_else(|| Error::Checkpoint(format!("array {name}: extents overflow")))?;
            let what = format!("values of array {k} ({name})");
            let raw = r.take(n.saturating_mul(4), &what)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.push(Tensor::new(&shape, data)?);
            names.push(name);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last array",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            meta: CheckpointMeta { condition, config },
            names,
            arrays,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated file: {what} needs {n} bytes at offset {} but only {} remain",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, n: usize, what: &str) -> Result<String> {
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

pub fn save_checkpoint(store: &ParamStore<f32>, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = Checkpoint::from_store(store, meta.clone()).encode();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::decode(&fs::read(path)?)
}
