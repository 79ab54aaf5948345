//! Binary checkpoint format, version 1.
//!
//! Layout, all integers little-endian:
//!   magic "DOCBINCK" | version u32 | stage u8 | global_step u64 |
//!   stage_step u64 | config (u64 length + JSON) | tensor table |
//!   optimizer states | sampler (seed u64 + two u128 stream positions) |
//!   extractor flag u8 (0 = built-in default, 1 = embedded tensor table)
//!
//! A tensor table is: count u64, then per tensor name (u64 length +
//! UTF-8), ndim u64, dims, element count u64, raw f32 data. Optimizer
//! states appear for exactly the networks the config's mode owns, in
//! the fixed order texture net, binarizer, texture disc, binarization
//! disc: step count u64, pair count u64, then per parameter the length
//! and both moment vectors.
//!
//! The encoding has no optional padding and every field is written from
//! canonical state, so save, load, save again is byte-identical; that
//! equality is what the resume tests pin.

use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::extractor::FeatureExtractor;
use crate::networks::{NamedTable, NamedTensor};
use crate::pipeline::{SamplerState, UnpairedSampler};
use crate::trainer::{Stage, TrainConfig, Trainer};
use docbin_tensor::Adam;

const MAGIC: &[u8; 8] = b"DOCBINCK";
const FORMAT_VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u64(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_tensor_table(out: &mut Vec<u8>, table: &[NamedTensor]) {
    put_u64(out, table.len() as u64);
    for t in table {
        put_bytes(out, t.name.as_bytes());
        put_u64(out, t.shape.len() as u64);
        for &d in &t.shape {
            put_u64(out, d as u64);
        }
        put_u64(out, t.data.len() as u64);
        put_f32s(out, &t.data);
    }
}

fn put_optimizer(out: &mut Vec<u8>, opt: &Adam<f32>) {
    let (t, moments) = opt.state();
    put_u64(out, t);
    put_u64(out, moments.len() as u64);
    for (m, v) in moments {
        put_u64(out, m.len() as u64);
        put_f32s(out, m);
        put_f32s(out, v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                CoreError::Checkpoint(format!(
                    "truncated: wanted {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    /// Length-prefixed count that something per-element will be read for;
    /// bounded by the remaining bytes so a corrupt length cannot trigger
    /// a huge allocation.
    fn count(&mut self, what: &str, min_element_bytes: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        let remaining = self.buf.len() - self.pos;
        if n.saturating_mul(min_element_bytes.max(1)) > remaining {
            return Err(CoreError::Checkpoint(format!(
                "implausible {what} count {n} at offset {}",
                self.pos - 8
            )));
        }
        Ok(n)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(CoreError::Checkpoint(format!(
                "{} trailing bytes after checkpoint payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn read_tensor_table(r: &mut Reader) -> Result<Vec<NamedTensor>> {
    let count = r.count("tensor", 24)?;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.count("name byte", 1)?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CoreError::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.count("dimension", 8)?;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel = r.count("element", 4)?;
        if shape.iter().product::<usize>() != numel {
            return Err(CoreError::Checkpoint(format!(
                "tensor {name}: shape {shape:?} disagrees with element count {numel}"
            )));
        }
        let data = r.f32s(numel)?;
        table.push(NamedTensor { name, shape, data });
    }
    Ok(table)
}

fn read_optimizer(r: &mut Reader, opt: &mut Adam<f32>, param_lens: &[usize]) -> Result<()> {
    let t = r.u64()?;
    let pairs = r.count("moment pair", 8)?;
    if pairs != 0 && pairs != param_lens.len() {
        return Err(CoreError::Checkpoint(format!(
            "optimizer has {pairs} moment pairs for {} parameters",
            param_lens.len()
        )));
    }
    let mut moments = Vec::with_capacity(pairs);
    for (i, &expected) in param_lens.iter().enumerate().take(pairs) {
        let len = r.count("moment value", 8)?;
        if len != expected {
            return Err(CoreError::Checkpoint(format!(
                "moment pair {i} has {len} values, parameter has {expected}"
            )));
        }
        let m = r.f32s(len)?;
        let v = r.f32s(len)?;
        moments.push((m, v));
    }
    opt.load_state(t, moments);
    Ok(())
}

/// Serialize the trainer's complete resumable state.
pub fn checkpoint_bytes(trainer: &Trainer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(trainer.stage.code());
    put_u64(&mut out, trainer.global_step);
    put_u64(&mut out, trainer.stage_step);

    let config = serde_json::to_vec(&trainer.config)
        .map_err(|e| CoreError::Checkpoint(format!("config serialization failed: {e}")))?;
    put_bytes(&mut out, &config);

    put_tensor_table(&mut out, &trainer.export_all());

    if let Some(opt) = &trainer.opt_tanet {
        put_optimizer(&mut out, opt);
    }
    put_optimizer(&mut out, &trainer.opt_binet);
    if let Some(opt) = &trainer.opt_disc_g {
        put_optimizer(&mut out, opt);
    }
    if let Some(opt) = &trainer.opt_disc_f {
        put_optimizer(&mut out, opt);
    }

    let sampler = trainer.sampler.state();
    put_u64(&mut out, sampler.seed);
    out.extend_from_slice(&sampler.clean_word_pos.to_le_bytes());
    out.extend_from_slice(&sampler.reference_word_pos.to_le_bytes());

    if trainer.extractor_is_default {
        out.push(0);
    } else {
        out.push(1);
        put_tensor_table(&mut out, &trainer.extractor.export_state());
    }
    Ok(out)
}

/// Reconstruct a trainer from checkpoint bytes. The config snapshot
/// rebuilds the network shapes, then every tensor, optimizer moment,
/// and RNG position is overwritten from the file.
pub fn trainer_from_bytes(bytes: &[u8]) -> Result<Trainer> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != MAGIC {
        return Err(CoreError::Checkpoint(
            "not a checkpoint file (bad magic)".into(),
        ));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CoreError::Checkpoint(format!(
            "unsupported format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let stage = Stage::from_code(r.u8()?)?;
    let global_step = r.u64()?;
    let stage_step = r.u64()?;

    let config_len = r.count("config byte", 1)?;
    let config: TrainConfig = serde_json::from_slice(r.take(config_len)?)
        .map_err(|e| CoreError::Checkpoint(format!("config snapshot unreadable: {e}")))?;

    let mut trainer = Trainer::new(config)?;
    let table = read_tensor_table(&mut r)?;
    trainer.import_all(&NamedTable::new(&table))?;

    let param_lens = |params: Vec<&mut docbin_tensor::Tensor<f32>>| -> Vec<usize> {
        params.into_iter().map(|p| p.numel()).collect()
    };
    if let Some(opt) = trainer.opt_tanet.as_mut() {
        let net = trainer.tanet.as_mut().expect("optimizer implies network");
        read_optimizer(&mut r, opt, &param_lens(net.params_mut()))?;
    }
    let lens = param_lens(trainer.binet.params_mut());
    read_optimizer(&mut r, &mut trainer.opt_binet, &lens)?;
    if let Some(opt) = trainer.opt_disc_g.as_mut() {
        let net = trainer.disc_g.as_mut().expect("optimizer implies network");
        read_optimizer(&mut r, opt, &param_lens(net.params_mut()))?;
    }
    if let Some(opt) = trainer.opt_disc_f.as_mut() {
        let net = trainer.disc_f.as_mut().expect("optimizer implies network");
        read_optimizer(&mut r, opt, &param_lens(net.params_mut()))?;
    }

    let sampler = SamplerState {
        seed: r.u64()?,
        clean_word_pos: r.u128()?,
        reference_word_pos: r.u128()?,
    };
    trainer.sampler = UnpairedSampler::restore(&sampler);

    match r.u8()? {
        0 => {}
        1 => {
            let table = read_tensor_table(&mut r)?;
            trainer.set_extractor(FeatureExtractor::from_named(&table)?);
        }
        other => {
            return Err(CoreError::Checkpoint(format!(
                "unknown extractor flag {other}"
            )));
        }
    }

    trainer.stage = stage;
    trainer.global_step = global_step;
    trainer.stage_step = stage_step;
    r.finish()?;
    Ok(trainer)
}

pub fn save_checkpoint(trainer: &Trainer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(trainer)?).map_err(|e| CoreError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Trainer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    trainer_from_bytes(&bytes)
}
