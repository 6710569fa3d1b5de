//! Versioned binary checkpoints: the model config followed by every named
//! tensor (name, shape, row-major little-endian `f64` values).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::codec::*;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 8] = b"PSGUCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(w: &mut W, params: &ModelParams) -> Result<()> {
    write_header(w, MAGIC, CHECKPOINT_VERSION)?;
    let c = &params.config;
    let fields = [
        c.t_in,
        c.t_out,
        c.features_per_step,
        c.embed_dim,
        c.mlp_hidden,
        c.conv_channels[0],
        c.conv_channels[1],
        c.conv_channels[2],
        c.cbam_reduction,
        c.spatial_kernel,
    ];
    fields.iter().try_for_each(|&v| write_u64(w, v as u64))?;
    let named = params.named_tensors();
    write_u64(w, named.len() as u64)?;
    for (name, t) in named {
        write_str(w, &name)?;
        write_u64(w, t.rank() as u64)?;
        t.shape().iter().try_for_each(|&d| write_u64(w, d as u64))?;
        write_f64s(w, t.data())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<ModelParams> {
    let version = read_header(r, MAGIC, "checkpoint")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let mut f = [0usize; 10];
    for v in &mut f {
        *v = read_usize(r)?;
    }
    let config = ModelConfig {
        t_in: f[0],
        t_out: f[1],
        features_per_step: f[2],
        embed_dim: f[3],
        mlp_hidden: f[4],
        conv_channels: [f[5], f[6], f[7]],
        cbam_reduction: f[8],
        spatial_kernel: f[9],
    };
    config.validate()?;
    let count = read_usize(r)?;
    if count > 1024 {
        return Err(Error::Format(format!("implausible tensor count {count}")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = read_str(r)?;
        let rank = read_usize(r)?;
        if rank == 0 || rank > 8 {
            return Err(Error::Format(format!("tensor `{name}` has rank {rank}")));
        }
        let shape = (0..rank).map(|_| read_usize(r)).collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| Error::Format(format!("tensor `{name}` shape {shape:?} is implausible")))?;
        let data = read_f64s(r, numel)?;
        tensors.push((name, Tensor::new(shape, data)?));
    }
    ModelParams::from_named(config, tensors)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, params)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file))
}
