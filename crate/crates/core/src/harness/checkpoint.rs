//! Binary checkpoint format.
//!
//! Layout: magic `FRQR`, u32 version, u32 tensor count; per tensor a u16
//! name length, the name bytes, a u8 rank, u32 dims, then f64
//! little-endian values; a CRC32 of everything before it closes the file.
//! Tensors are ordered, so save -> load -> save is byte-identical.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::Param;
use crate::model::{build_model, Method, ModelConfig, Network};
use crate::scalar::Real;
use crate::tensor::Value;

const MAGIC: &[u8; 4] = b"FRQR";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// (name, dims, values), order-preserving.
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&(String, Vec<usize>, Vec<f64>)> {
        self.tensors.iter().find(|(n, _, _)| n == name)
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        self.get(name)
            .and_then(|(_, _, v)| v.first().copied())
            .ok_or_else(|| Error::Format(format!("checkpoint missing '{name}'")))
    }

    fn vector(&self, name: &str) -> Result<&[f64]> {
        self.get(name)
            .map(|(_, _, v)| v.as_slice())
            .ok_or_else(|| Error::Format(format!("checkpoint missing '{name}'")))
    }
}

pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ck.tensors.len() as u32).to_le_bytes());
    for (name, dims, values) in &ck.tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dims.len() as u8);
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let payload_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[payload_len..].try_into().unwrap());
    let actual = crc32(&bytes[..payload_len]);
    if stored != actual {
        return Err(Error::Format(format!(
            "checkpoint CRC mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut pos = 4;
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > payload_len {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = dims.iter().product();
        let raw = take(numel * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, dims, values));
    }
    if pos != payload_len {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint { tensors })
}

pub fn save(ck: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, encode(ck))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

fn push_value<T: Real>(tensors: &mut Vec<(String, Vec<usize>, Vec<f64>)>, name: &str, v: &Value<T>) {
    tensors.push((
        name.to_string(),
        v.shape.clone(),
        v.data.iter().map(|x| x.as_f64()).collect(),
    ));
}

/// Snapshot a network plus optimizer state and epoch into a checkpoint.
/// `velocities` must be in `params_mut()` order (empty = no optimizer state).
pub fn snapshot<T: Real>(
    net: &mut Network<T>,
    velocities: &[Vec<T>],
    epoch: usize,
    seed: u64,
) -> Checkpoint {
    let mut tensors = Vec::new();
    let cfg = net.config.clone();
    let meta_scalar = |t: &mut Vec<(String, Vec<usize>, Vec<f64>)>, n: &str, v: f64| {
        t.push((n.to_string(), vec![1], vec![v]));
    };
    meta_scalar(&mut tensors, "meta.epoch", epoch as f64);
    meta_scalar(&mut tensors, "meta.seed", seed as f64);
    meta_scalar(&mut tensors, "meta.method", method_code(cfg.method));
    meta_scalar(&mut tensors, "meta.replaced_layers", cfg.replaced_layers as f64);
    meta_scalar(&mut tensors, "meta.mask_sigma", cfg.mask_sigma);
    meta_scalar(&mut tensors, "meta.blocks_per_stage", cfg.blocks_per_stage as f64);
    meta_scalar(&mut tensors, "meta.num_classes", cfg.num_classes as f64);
    meta_scalar(&mut tensors, "meta.projection_dim", cfg.projection_dim as f64);
    tensors.push((
        "meta.widths".to_string(),
        vec![cfg.widths.len()],
        cfg.widths.iter().map(|&w| w as f64).collect(),
    ));
    tensors.push((
        "meta.input_size".to_string(),
        vec![3],
        vec![
            cfg.input_size.0 as f64,
            cfg.input_size.1 as f64,
            cfg.input_size.2 as f64,
        ],
    ));
    for p in net.params_mut() {
        push_value(&mut tensors, &format!("param.{}", p.name), &p.value);
    }
    for bn in net.bn_layers_mut() {
        let base = bn.gamma.name.trim_end_matches(".gamma").to_string();
        tensors.push((
            format!("stat.{base}.running_mean"),
            vec![bn.running_mean.len()],
            bn.running_mean.iter().map(|v| v.as_f64()).collect(),
        ));
        tensors.push((
            format!("stat.{base}.running_var"),
            vec![bn.running_var.len()],
            bn.running_var.iter().map(|v| v.as_f64()).collect(),
        ));
    }
    for (p, v) in net.params_mut().iter().zip(velocities) {
        tensors.push((
            format!("opt.{}.velocity", p.name),
            p.value.shape.clone(),
            v.iter().map(|x| x.as_f64()).collect(),
        ));
    }
    Checkpoint { tensors }
}

/// Append the dataset-side context an evaluator needs so a checkpoint can be
/// scored without the original training config: the label subset and the
/// per-channel normalization constants.
pub fn attach_eval_context(ck: &mut Checkpoint, cfg: &super::config::TrainConfig) {
    ck.tensors.push((
        "meta.classes".to_string(),
        vec![cfg.classes.len()],
        cfg.classes.iter().map(|&c| c as f64).collect(),
    ));
    ck.tensors.push((
        "meta.channel_means".to_string(),
        vec![3],
        cfg.channel_means.to_vec(),
    ));
    ck.tensors.push((
        "meta.channel_stds".to_string(),
        vec![3],
        cfg.channel_stds.to_vec(),
    ));
}

/// The evaluation context stored by [`attach_eval_context`], if present.
pub fn eval_context(ck: &Checkpoint) -> Result<(Vec<u8>, [f64; 3], [f64; 3])> {
    let classes = ck.vector("meta.classes")?;
    let means = ck.vector("meta.channel_means")?;
    let stds = ck.vector("meta.channel_stds")?;
    if means.len() != 3 || stds.len() != 3 {
        return Err(Error::Format("normalization constants must have 3 entries".into()));
    }
    Ok((
        classes.iter().map(|&c| c as u8).collect(),
        [means[0], means[1], means[2]],
        [stds[0], stds[1], stds[2]],
    ))
}

fn method_code(m: Method) -> f64 {
    match m {
        Method::Baseline => 0.0,
        Method::Freq => 1.0,
        Method::Supcon => 2.0,
        Method::Both => 3.0,
    }
}

fn method_from_code(c: f64) -> Result<Method> {
    match c as i64 {
        0 => Ok(Method::Baseline),
        1 => Ok(Method::Freq),
        2 => Ok(Method::Supcon),
        3 => Ok(Method::Both),
        other => Err(Error::Format(format!("bad method code {other}"))),
    }
}

/// Rebuild a network (and optimizer state, if present) from a checkpoint.
pub fn restore<T: Real>(ck: &Checkpoint) -> Result<(Network<T>, Vec<Vec<T>>, usize, u64)> {
    let widths = ck.vector("meta.widths")?;
    let input = ck.vector("meta.input_size")?;
    if input.len() != 3 {
        return Err(Error::Format("meta.input_size must have 3 entries".into()));
    }
    let cfg = ModelConfig {
        method: method_from_code(ck.scalar("meta.method")?)?,
        replaced_layers: ck.scalar("meta.replaced_layers")? as usize,
        mask_sigma: ck.scalar("meta.mask_sigma")?,
        widths: widths.iter().map(|&w| w as usize).collect(),
        blocks_per_stage: ck.scalar("meta.blocks_per_stage")? as usize,
        num_classes: ck.scalar("meta.num_classes")? as usize,
        projection_dim: ck.scalar("meta.projection_dim")? as usize,
        input_size: (input[0] as usize, input[1] as usize, input[2] as usize),
    };
    let seed = ck.scalar("meta.seed")? as u64;
    let epoch = ck.scalar("meta.epoch")? as usize;
    let mut net: Network<T> = build_model(&cfg, seed)?;
    for p in net.params_mut() {
        restore_param(ck, p)?;
    }
    for bn in net.bn_layers_mut() {
        let base = bn.gamma.name.trim_end_matches(".gamma").to_string();
        let mean = ck.vector(&format!("stat.{base}.running_mean"))?;
        let var = ck.vector(&format!("stat.{base}.running_var"))?;
        bn.running_mean = mean.iter().map(|&v| T::of(v)).collect();
        bn.running_var = var.iter().map(|&v| T::of(v)).collect();
    }
    let mut velocities = Vec::new();
    for p in net.params_mut() {
        match ck.get(&format!("opt.{}.velocity", p.name)) {
            Some((_, _, v)) => velocities.push(v.iter().map(|&x| T::of(x)).collect()),
            None => {
                velocities.clear();
                break;
            }
        }
    }
    Ok((net, velocities, epoch, seed))
}

fn restore_param<T: Real>(ck: &Checkpoint, p: &mut Param<T>) -> Result<()> {
    let (_, dims, values) = ck
        .get(&format!("param.{}", p.name))
        .ok_or_else(|| Error::Format(format!("checkpoint missing param.{}", p.name)))?;
    if dims != &p.value.shape {
        return Err(Error::Format(format!(
            "param.{}: checkpoint shape {dims:?} != model shape {:?}",
            p.name, p.value.shape
        )));
    }
    p.value.data = values.iter().map(|&v| T::of(v)).collect();
    Ok(())
}
