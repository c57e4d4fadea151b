//! Binary training snapshot.
//!
//! Layout (little-endian): magic `UGSC`, u16 version, u32 length + spec text,
//! u64 epoch, then length-prefixed f64 blocks for parameters, buffers and the
//! two Adam moments, u64 Adam step count, and the shuffle and dropout stream
//! positions.

use std::io::{Read, Write};
use std::path::Path;

use super::model::Model;
use super::optim::Adam;
use super::spec::ArchitectureSpec;
use crate::error::{io_at, Error, Result};
use crate::rng::{RngState, RNG_STATE_BYTES};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UGSC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ArchitectureSpec,
    pub epoch: u64,
    pub params: Vec<f64>,
    pub buffers: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_t: u64,
    pub shuffle_rng: RngState,
    pub dropout_rng: RngState,
}

fn put_block(out: &mut Vec<u8>, xs: &[f64]) {
    out.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("block size".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let spec = self.spec.to_string();
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.as_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        put_block(&mut out, &self.params);
        put_block(&mut out, &self.buffers);
        put_block(&mut out, &self.adam_m);
        put_block(&mut out, &self.adam_v);
        out.extend_from_slice(&self.adam_t.to_le_bytes());
        out.extend_from_slice(&self.shuffle_rng.to_bytes());
        out.extend_from_slice(&self.dropout_rng.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("spec text is not UTF-8".into()))?;
        let spec: ArchitectureSpec = text.parse()?;
        let epoch = r.u64()?;
        let params = r.block()?;
        let buffers = r.block()?;
        let adam_m = r.block()?;
        let adam_v = r.block()?;
        let adam_t = r.u64()?;
        let shuffle_rng = RngState::from_bytes(r.take(RNG_STATE_BYTES)?)?;
        let dropout_rng = RngState::from_bytes(r.take(RNG_STATE_BYTES)?)?;
        if !r.buf.is_empty() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint {
            spec,
            epoch,
            params,
            buffers,
            adam_m,
            adam_v,
            adam_t,
            shuffle_rng,
            dropout_rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(io_at(path))?;
        f.write_all(&self.to_bytes()).map_err(io_at(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(io_at(path))?;
        Checkpoint::from_bytes(&buf).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Rebuilds the network and loads parameters and running statistics.
    pub fn model(&self) -> Result<Model> {
        let mut m = Model::new(&self.spec, 0)?;
        m.set_flat_params(&self.params)?;
        m.set_flat_buffers(&self.buffers)?;
        Ok(m)
    }

    pub fn optimizer(&self, model: &Model, beta1: f64, beta2: f64, eps: f64) -> Result<Adam> {
        let mut opt = Adam::new(beta1, beta2, eps);
        opt.set_flat_moments(&model.params(), &self.adam_m, &self.adam_v)?;
        opt.t = self.adam_t;
        Ok(opt)
    }
}
