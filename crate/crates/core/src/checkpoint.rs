//! Binary checkpoints of named tensors.
//!
//! Layout: `"HDLM"`, `u32` version, `u64` iteration, then until end of file
//! a sequence of entries `(u32 name length, name bytes, u32 rank, u32 dims,
//! f64 values)`, all little-endian. Optimizer moments are stored under
//! `adam/m/<name>` and `adam/v/<name>`, the step counter as `adam/t`, and the
//! model dimension summary as `meta/fingerprint`.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::Model;
use crate::nn::ParamStore;
use crate::optim::AdamState;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HDLM";
pub const VERSION: u32 = 1;

const ADAM_M: &str = "adam/m/";
const ADAM_V: &str = "adam/v/";
const ADAM_T: &str = "adam/t";
const FINGERPRINT: &str = "meta/fingerprint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{name}: checkpoint has shape {found:?} but the model expects {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("parameter names differ: missing {missing:?}, unexpected {unexpected:?}")]
    Names {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("model dimensions {found:?} do not match the configured {expected:?}")]
    Fingerprint { expected: Vec<usize>, found: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub params: ParamStore,
    pub adam: Option<AdamState>,
    pub fingerprint: Vec<usize>,
}

impl Checkpoint {
    pub fn new(model: &Model, adam: Option<&AdamState>, iteration: u64) -> Self {
        Checkpoint {
            iteration,
            params: model.params.clone(),
            adam: adam.cloned(),
            fingerprint: model.config.fingerprint(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        for (name, t) in self.params.iter() {
            put_entry(&mut out, name, t);
        }
        if let Some(adam) = &self.adam {
            for (i, name) in adam.names.iter().enumerate() {
                put_entry(&mut out, &format!("{ADAM_M}{name}"), &adam.m[i]);
                put_entry(&mut out, &format!("{ADAM_V}{name}"), &adam.v[i]);
            }
            put_entry(&mut out, ADAM_T, &Tensor::scalar(adam.t as f64));
        }
        let fp = Tensor::vector(self.fingerprint.iter().map(|&d| d as f64).collect());
        put_entry(&mut out, FINGERPRINT, &fp);
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let fmt = |message: String| CheckpointError::Format {
            path: origin.to_path_buf(),
            message,
        };
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).map_err(&fmt)?;
        if magic != MAGIC {
            return Err(fmt(format!("bad magic {magic:?}, expected \"HDLM\"")));
        }
        let version = r.u32().map_err(&fmt)?;
        if version != VERSION {
            return Err(fmt(format!("unsupported version {version}, expected {VERSION}")));
        }
        let iteration = r.u64().map_err(&fmt)?;
        let mut params = ParamStore::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        let mut t = None;
        let mut fingerprint = Vec::new();
        while r.pos < bytes.len() {
            let (name, tensor) = r.entry().map_err(&fmt)?;
            if let Some(p) = name.strip_prefix(ADAM_M) {
                m.push((p.to_string(), tensor));
            } else if let Some(p) = name.strip_prefix(ADAM_V) {
                v.push((p.to_string(), tensor));
            } else if name == ADAM_T {
                t = Some(tensor.item().map_err(|e| fmt(e.to_string()))? as u64);
            } else if name == FINGERPRINT {
                fingerprint = tensor.data().iter().map(|&d| d as usize).collect();
            } else {
                params
                    .insert(name.clone(), tensor)
                    .map_err(|_| fmt(format!("duplicate tensor {name}")))?;
            }
        }
        let adam = match t {
            None if m.is_empty() && v.is_empty() => None,
            None => return Err(fmt("optimizer moments without a step counter".into())),
            Some(t) => {
                if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.0 != b.0) {
                    return Err(fmt("first and second moments do not pair up".into()));
                }
                Some(AdamState {
                    names: m.iter().map(|(n, _)| n.clone()).collect(),
                    m: m.into_iter().map(|(_, t)| t).collect(),
                    v: v.into_iter().map(|(_, t)| t).collect(),
                    t,
                })
            }
        };
        Ok(Checkpoint {
            iteration,
            params,
            adam,
            fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, path)
    }

    /// Copies the parameters into `model` after checking names, shapes and
    /// the dimension summary.
    pub fn restore(&self, model: &mut Model) -> Result<()> {
        let missing: Vec<String> = model
            .params
            .names()
            .iter()
            .filter(|n| self.params.get(n).is_none())
            .cloned()
            .collect();
        let unexpected: Vec<String> = self
            .params
            .names()
            .iter()
            .filter(|n| model.params.get(n).is_none())
            .cloned()
            .collect();
        if !missing.is_empty() || !unexpected.is_empty() {
            return Err(CheckpointError::Names { missing, unexpected });
        }
        for (name, t) in model.params.iter() {
            let saved = self.params.get(name).expect("names checked");
            if saved.shape() != t.shape() {
                return Err(CheckpointError::Shape {
                    name: name.to_string(),
                    expected: t.shape().to_vec(),
                    found: saved.shape().to_vec(),
                });
            }
        }
        let expected = model.config.fingerprint();
        if !self.fingerprint.is_empty() && self.fingerprint != expected {
            return Err(CheckpointError::Fingerprint {
                expected,
                found: self.fingerprint.clone(),
            });
        }
        let names = model.params.names().to_vec();
        for (name, t) in names.iter().zip(model.params.tensors_mut()) {
            *t = self.params.get(name).expect("names checked").clone();
        }
        Ok(())
    }
}

fn put_entry(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
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
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!(
                "truncated at byte {}: needed {n} more bytes, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )),
        }
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn entry(&mut self) -> std::result::Result<(String, Tensor), String> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec()).map_err(|e| format!("tensor name: {e}"))?;
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let count: usize = shape.iter().product();
        let raw = self.take(count.checked_mul(8).ok_or("tensor too large")?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| format!("{name}: {e}"))?;
        Ok((name, t))
    }
}
