//! Single-file binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "SPKFUSE\0"
//! version  u32
//! meta     u64 length + JSON (configs, epoch, optimizer step, history)
//! count    u32
//! tensor   u32 name length, name, u32 rank, rank x u64 dims, numel x f64
//! checksum u64      FNV-1a of every preceding byte
//! ```
//!
//! Values are stored as `f64`, which holds `f32` and `f64` parameters exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::nn::{Module, Slot};
use crate::optim::{Adam, Moments};
use crate::tensor::Float;
use crate::train::{EpochRecord, TrainConfig};

pub const MAGIC: [u8; 8] = *b"SPKFUSE\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub epoch: usize,
    pub adam_step: u64,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<NamedArray>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn to_f64<F: Float>(v: &[F]) -> Vec<f64> {
    v.iter().map(|x| x.f64()).collect()
}

fn model_arrays<F: Float>(model: &Model<F>) -> Vec<NamedArray> {
    let mut out = Vec::new();
    model.visit("", &mut |name, slot| match slot {
        Slot::Param(t) => out.push(NamedArray {
            name: format!("param/{name}"),
            shape: t.shape().to_vec(),
            data: t.to_f64_vec(),
        }),
        Slot::Buffer(stats) => {
            let s = stats.borrow();
            for (kind, v) in [("mean", &s.mean), ("var", &s.var)] {
                out.push(NamedArray {
                    name: format!("running_{kind}/{name}"),
                    shape: vec![v.len()],
                    data: to_f64(v),
                });
            }
        }
    });
    out
}

impl Checkpoint {
    /// Snapshot of the model, and of the optimizer when given.
    pub fn capture<F: Float>(model: &Model<F>, opt: Option<&Adam<F>>, meta: CheckpointMeta) -> Self {
        let mut tensors = model_arrays(model);
        if let Some(opt) = opt {
            for ((name, p), mom) in opt.params.iter().zip(&opt.moments) {
                for (kind, v) in [("m", &mom.m), ("v", &mom.v)] {
                    tensors.push(NamedArray {
                        name: format!("adam_{kind}/{name}"),
                        shape: p.shape().to_vec(),
                        data: to_f64(v),
                    });
                }
            }
        }
        Self {
            meta: CheckpointMeta {
                adam_step: opt.map_or(meta.adam_step, |o| o.t),
                ..meta
            },
            tensors,
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| Error::CorruptCheckpoint(what.to_string());
        if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("bad magic header"));
        }
        let mut r = Reader { buf: bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        if bytes.len() < MAGIC.len() + 12 {
            return Err(corrupt("truncated"));
        }
        let body = &bytes[..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"));
        if fnv1a(body) != stored {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let mut r = Reader { buf: body, pos: r.pos };
        let meta_len = r.u64()? as usize;
        let meta: CheckpointMeta =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::CorruptCheckpoint(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| corrupt("tensor name is not utf-8"))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| corrupt("shape overflow"))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| corrupt("shape overflow"))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push(NamedArray { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Copies parameters and running statistics into `model`, whose config
    /// must equal the stored one.
    pub fn restore<F: Float>(&self, model: &Model<F>) -> Result<()> {
        if model.cfg != self.meta.model {
            return Err(Error::CheckpointMismatch("model config differs from the checkpoint's".into()));
        }
        let mut failure = None;
        let mut fill = |name: &str, shape: &[usize], dst: &mut [F]| {
            match self.get(name) {
                Some(a) if a.shape == shape && a.data.len() == dst.len() => {
                    dst.iter_mut().zip(&a.data).for_each(|(d, &s)| *d = F::c(s));
                }
                Some(a) => {
                    failure.get_or_insert(format!("{name}: stored shape {:?}, model expects {shape:?}", a.shape));
                }
                None => {
                    failure.get_or_insert(format!("{name} missing from checkpoint"));
                }
            };
        };
        model.visit("", &mut |name, slot| match slot {
            Slot::Param(t) => {
                let shape = t.shape().to_vec();
                fill(&format!("param/{name}"), &shape, &mut t.values_mut());
            }
            Slot::Buffer(stats) => {
                let mut s = stats.borrow_mut();
                let n = s.mean.len();
                fill(&format!("running_mean/{name}"), &[n], &mut s.mean);
                fill(&format!("running_var/{name}"), &[n], &mut s.var);
            }
        });
        match failure {
            Some(msg) => Err(Error::CheckpointMismatch(msg)),
            None => Ok(()),
        }
    }

    /// Restores Adam moments and step count for the optimizer's parameters.
    pub fn restore_optimizer<F: Float>(&self, opt: &mut Adam<F>) -> Result<()> {
        for ((name, p), mom) in opt.params.iter().zip(opt.moments.iter_mut()) {
            let load = |kind: &str| -> Result<Vec<F>> {
                let key = format!("adam_{kind}/{name}");
                let a = self.get(&key).ok_or_else(|| Error::CheckpointMismatch(format!("{key} missing")))?;
                if a.data.len() != p.numel() {
                    return Err(Error::CheckpointMismatch(format!("{key} has {} values", a.data.len())));
                }
                Ok(a.data.iter().map(|&v| F::c(v)).collect())
            };
            *mom = Moments {
                m: load("m")?,
                v: load("v")?,
            };
        }
        opt.t = self.meta.adam_step;
        Ok(())
    }

    pub fn build_model<F: Float>(&self) -> Result<Model<F>> {
        let model = Model::new(self.meta.model.clone())?;
        self.restore(&model)?;
        Ok(model)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptCheckpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
