//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "ANAPHCKP"
//! version  u32
//! config   u64 length + UTF-8 bytes
//! params   u32 count, then per entry: u32 name length, name bytes,
//!          u32 rank, u64 per dimension, f64 values (row-major)
//! optim    u8 present flag; if 1: u64 step, u32 count, then `count`
//!          first-moment entries followed by `count` second-moment entries
//!          (same entry encoding as params)
//! ```
//!
//! A sidecar `<path>.manifest.txt` lists every entry name and shape.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::adam::OptimizerState;
use super::graph::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ANAPHCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    /// Serialized run configuration.
    pub config: String,
    pub params: Vec<(String, Tensor)>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn capture(config: String, params: &ParamStore, optimizer: Option<&OptimizerState>) -> Self {
        Checkpoint {
            version: FORMAT_VERSION,
            config,
            params: params
                .iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
            optimizer: optimizer.cloned(),
        }
    }

    /// Copies stored values into `store`. Every parameter must be present
    /// with an identical shape; otherwise all offending names are reported.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        let mut bad = Vec::new();
        for id in store.ids() {
            let name = store.name(id);
            match self.params.iter().find(|(n, _)| n == name) {
                Some((_, t)) if t.shape() == store.get(id).shape() => {}
                _ => bad.push(name.to_string()),
            }
        }
        for (n, _) in &self.params {
            if store.find(n).is_none() {
                bad.push(n.clone());
            }
        }
        if !bad.is_empty() {
            return Err(Error::CheckpointMismatch(bad));
        }
        for (n, t) in &self.params {
            let id = store.find(n).expect("checked above");
            *store.get_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        write_entries(&mut out, self.params.iter().map(|(n, t)| (n.as_str(), t)));
        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                out.extend_from_slice(&state.step.to_le_bytes());
                out.extend_from_slice(&(state.first.len() as u32).to_le_bytes());
                for moments in [&state.first, &state.second] {
                    for t in moments {
                        write_entry(&mut out, "", t);
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let clen = r.u64()? as usize;
        let config = String::from_utf8(r.take(clen)?.to_vec())
            .map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(r.entry()?);
        }
        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = r.u64()?;
                let n = r.u32()? as usize;
                let mut first = Vec::with_capacity(n);
                let mut second = Vec::with_capacity(n);
                for _ in 0..n {
                    first.push(r.entry()?.1);
                }
                for _ in 0..n {
                    second.push(r.entry()?.1);
                }
                Some(OptimizerState {
                    step,
                    first,
                    second,
                })
            }
            f => return Err(Error::Checkpoint(format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            version,
            config,
            params,
            optimizer,
        })
    }

    pub fn manifest(&self) -> String {
        let mut s = format!("version {}\n", self.version);
        for (n, t) in &self.params {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            s.push_str(&format!("{n}\t[{}]\n", dims.join(", ")));
        }
        if let Some(o) = &self.optimizer {
            s.push_str(&format!("optimizer step {}\n", o.step));
        }
        s
    }

    pub fn manifest_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".manifest.txt");
        PathBuf::from(p)
    }

    /// Writes the container and its manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let mpath = Self::manifest_path(path);
        fs::write(&mpath, self.manifest()).map_err(|e| Error::io(&mpath, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_entries<'a>(out: &mut Vec<u8>, entries: impl ExactSizeIterator<Item = (&'a str, &'a Tensor)>) {
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (n, t) in entries {
        write_entry(out, n, t);
    }
}

fn write_entry(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn entry(&mut self) -> Result<(String, Tensor)> {
        let nlen = self.u32()? as usize;
        let name = String::from_utf8(self.take(nlen)?.to_vec())
            .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, Tensor::new(shape, data)?))
    }
}
