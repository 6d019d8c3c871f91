//! Checkpoint file, little-endian:
//!
//! ```text
//! "STEN"  u32 version = 1
//! ArchConfig: n_channels, n_samples, f1, depth_multiplier, f2, temporal_kernel,
//!             sep_kernel, pool1, pool2 (u32 each), dropout_p (f32),
//!             dense_units, n_classes (u32), then for maxnorm_depthwise and
//!             maxnorm_dense: u32 presence flag + f32 value
//! u32 tensor count
//! per tensor: u16 name length, UTF-8 name, u8 rank, u32 dims, f32 payload
//! ```

use std::fs;
use std::path::Path;

use super::{ArchConfig, ModelParams};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"STEN";
pub const CHECKPOINT_VERSION: u32 = 1;

fn u32_field(v: usize, name: &str) -> Result<u32> {
    u32::try_from(v)
        .map_err(|_| Error::InvalidArgument(format!("{name} = {v} does not fit in u32")))
}

fn write_arch(w: &mut ByteWriter, a: &ArchConfig) -> Result<()> {
    for (name, v) in [
        ("n_channels", a.n_channels),
        ("n_samples", a.n_samples),
        ("f1", a.f1),
        ("depth_multiplier", a.depth_multiplier),
        ("f2", a.f2),
        ("temporal_kernel", a.temporal_kernel),
        ("sep_kernel", a.sep_kernel),
        ("pool1", a.pool1),
        ("pool2", a.pool2),
    ] {
        w.u32(u32_field(v, name)?);
    }
    w.f32(a.dropout_p);
    w.u32(u32_field(a.dense_units, "dense_units")?);
    w.u32(u32_field(a.n_classes, "n_classes")?);
    for limit in [a.maxnorm_depthwise, a.maxnorm_dense] {
        w.u32(limit.is_some() as u32);
        w.f32(limit.unwrap_or(0.0));
    }
    Ok(())
}

fn read_arch(r: &mut ByteReader<'_>) -> Result<ArchConfig> {
    let mut u = |what: &str| r.u32(what).map(|v| v as usize);
    let (n_channels, n_samples, f1, depth_multiplier, f2) =
        (u("arch")?, u("arch")?, u("arch")?, u("arch")?, u("arch")?);
    let (temporal_kernel, sep_kernel, pool1, pool2) =
        (u("arch")?, u("arch")?, u("arch")?, u("arch")?);
    let dropout_p = r.f32("arch")?;
    let dense_units = r.u32("arch")? as usize;
    let n_classes = r.u32("arch")? as usize;
    let mut limit = || -> Result<Option<f32>> {
        let present = r.u32("arch")?;
        let v = r.f32("arch")?;
        match present {
            0 => Ok(None),
            1 => Ok(Some(v)),
            other => Err(Error::Malformed(format!("max-norm presence flag {other}"))),
        }
    };
    let maxnorm_depthwise = limit()?;
    let maxnorm_dense = limit()?;
    Ok(ArchConfig {
        n_channels,
        n_samples,
        f1,
        depth_multiplier,
        f2,
        temporal_kernel,
        sep_kernel,
        pool1,
        pool2,
        dropout_p,
        dense_units,
        n_classes,
        maxnorm_depthwise,
        maxnorm_dense,
    })
}

/// Serialize to bytes.
pub fn write_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    let payload: usize = params
        .params()
        .iter()
        .map(|p| p.tensor.len() * 4 + 64)
        .sum();
    let mut w = ByteWriter::with_capacity(payload + 128);
    w.bytes(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    write_arch(&mut w, params.arch())?;
    w.u32(params.params().len() as u32);
    for p in params.params() {
        let name = p.name.as_bytes();
        w.u16(
            u16::try_from(name.len())
                .map_err(|_| Error::InvalidArgument(format!("name too long: {}", p.name)))?,
        );
        w.bytes(name);
        w.u8(p.tensor.rank() as u8);
        for &d in p.tensor.shape() {
            w.u32(u32_field(d, "dimension")?);
        }
        w.f32s(p.tensor.data());
    }
    Ok(w.into_inner())
}

/// Parse bytes produced by [`write_checkpoint`].
pub fn read_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = ByteReader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    let arch = read_arch(&mut r)?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(64));
    for i in 0..count {
        let what = format!("tensor {i}");
        let len = r.u16(&what)? as usize;
        let name = std::str::from_utf8(r.take(len, &what)?)
            .map_err(|_| Error::Malformed(format!("{what}: name is not UTF-8")))?
            .to_string();
        let rank = r.u8(&what)? as usize;
        let dims = (0..rank)
            .map(|_| r.u32(&what).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n.ok_or_else(|| Error::Malformed(format!("{what}: dims {dims:?} overflow")))?;
        let data = r.f32s(n, &format!("tensor {name}"))?;
        tensors.push((name, Tensor::from_vec(&dims, data)?));
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed(format!(
            "{} trailing bytes",
            r.remaining()
        )));
    }
    ModelParams::from_named(&arch, tensors)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_checkpoint(params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    read_checkpoint(&fs::read(path)?)
}
