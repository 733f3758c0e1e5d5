//! Binary model checkpoint.
//!
//! Layout: magic `TDMIX-CK1`, `u32` version, ten `u64` config fields (H, W,
//! C, P, D, heads, blocks, classes, seed, attention block or `u64::MAX`),
//! `u32` tensor count, then per tensor `u32` rank, `u32` dims and `f64` data.

use std::path::Path;

use super::{write_file, Reader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::vit::{param_shapes, VitConfig, VitModel, VitParams};

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"TDMIX-CK1";
pub const CHECKPOINT_VERSION: u32 = 1;
const NO_BLOCK: u64 = u64::MAX;

pub fn encode_checkpoint(model: &VitModel) -> Vec<u8> {
    let c = model.config();
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let fields = [
        c.image_height as u64,
        c.image_width as u64,
        c.channels as u64,
        c.patch as u64,
        c.embed_dim as u64,
        c.heads as u64,
        c.blocks as u64,
        c.classes as u64,
        c.seed,
        c.attention_block.map_or(NO_BLOCK, |b| b as u64),
    ];
    for f in fields {
        out.extend_from_slice(&f.to_le_bytes());
    }
    let tensors: Vec<&Tensor> = model.params().iter().collect();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Largest value accepted for a config dimension; keeps shape arithmetic small.
const MAX_DIM: u64 = 1 << 16;

pub fn decode_checkpoint(bytes: &[u8]) -> Result<VitModel> {
    let mut r = Reader::new(bytes);
    if r.take(CHECKPOINT_MAGIC.len(), "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::parse(0, "bad magic, not a checkpoint"));
    }
    let ver_at = r.pos();
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(ver_at, format!("unsupported checkpoint version {}", version)));
    }
    let cfg_at = r.pos();
    let mut dims = [0usize; 8];
    for (k, d) in dims.iter_mut().enumerate() {
        let at = r.pos();
        let v = r.u64("config field")?;
        if v > MAX_DIM {
            return Err(Error::parse(at, format!("config field {} value {} too large", k, v)));
        }
        *d = v as usize;
    }
    let seed = r.u64("seed")?;
    let block_at = r.pos();
    let block = r.u64("attention block")?;
    let attention_block = match block {
        NO_BLOCK => None,
        b if b <= MAX_DIM => Some(b as usize),
        _ => return Err(Error::parse(block_at, "attention block out of range")),
    };
    let config = VitConfig {
        image_height: dims[0],
        image_width: dims[1],
        channels: dims[2],
        patch: dims[3],
        embed_dim: dims[4],
        heads: dims[5],
        blocks: dims[6],
        classes: dims[7],
        seed,
        attention_block,
    };
    config.validate().map_err(|e| Error::parse(cfg_at, e.to_string()))?;
    let shapes = param_shapes(&config);
    let count_at = r.pos();
    let count = r.u32("tensor count")? as usize;
    if count != shapes.len() {
        return Err(Error::parse(
            count_at,
            format!("{} tensors, config needs {}", count, shapes.len()),
        ));
    }
    let mut tensors = Vec::with_capacity(count);
    for (k, want) in shapes.iter().enumerate() {
        let rank_at = r.pos();
        let rank = r.u32("rank")? as usize;
        if rank != want.len() {
            return Err(Error::parse(rank_at, format!("tensor {} has rank {}, expected {}", k, rank, want.len())));
        }
        for &w in want {
            let at = r.pos();
            let d = r.u32("dim")? as usize;
            if d != w {
                return Err(Error::parse(at, format!("tensor {} dim {} != expected {}", k, d, w)));
            }
        }
        let n = want.iter().try_fold(1usize, |a, &b| a.checked_mul(b));
        let n = match n {
            Some(n) if r.remaining() / 8 >= n => n,
            _ => return Err(Error::parse(r.pos(), format!("truncated data of tensor {}", k))),
        };
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.pos();
            let v = r.f64("value")?;
            if !v.is_finite() {
                return Err(Error::parse(at, format!("tensor {} holds a non-finite value", k)));
            }
            data.push(v);
        }
        tensors.push(Tensor::new(want.clone(), data)?);
    }
    r.finish()?;
    let params = VitParams::from_ordered(config.blocks, tensors.into_iter())?;
    VitModel::from_params(config, params)
}

pub fn write_checkpoint(path: &Path, model: &VitModel) -> Result<()> {
    write_file(path, &encode_checkpoint(model))
}

pub fn read_checkpoint(path: &Path) -> Result<VitModel> {
    decode_checkpoint(&std::fs::read(path)?)
}
