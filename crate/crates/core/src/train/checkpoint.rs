//! `TLNT` checkpoint container.
//!
//! ```text
//! "TLNT" | version u16
//! section: config as JSON
//! section: catalog (same layout as in the dataset file)
//! section: tensor count u64 | per tensor: name, kind u8 (0 vector, 1 matrix), rows u32, cols u32, rows·cols × f64
//! section: best valid MRR@20 f64 | epoch u64
//! ```
//! Every section carries a u64 length prefix; all numbers are little-endian.

use std::fs;
use std::path::Path;

use super::TrainConfig;
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{format_err, Result};
use crate::ingest::{read_catalog, write_catalog, ItemCatalog};
use crate::model::{ModelParams, Slot};
use crate::numkernel::{ParamSet, Shape, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TLNT";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub catalog: ItemCatalog,
    pub params: ModelParams,
    /// Validation MRR@20 of these parameters, in percent.
    pub best_valid_mrr: f64,
    /// Epoch these parameters come from; 0 means the initialisation.
    pub epoch: usize,
}

pub fn encode_checkpoint(cp: &Checkpoint) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(CHECKPOINT_VERSION);

    let config = serde_json::to_vec(&cp.config).map_err(|e| format_err(format!("config: {e}")))?;
    w.section(&config);

    let mut cat = ByteWriter::new();
    write_catalog(&mut cat, &cp.catalog);
    w.section(&cat.into_inner());

    let mut t = ByteWriter::new();
    t.u64(cp.params.set().len() as u64);
    for (_, name, tensor) in cp.params.set().iter() {
        t.str(name);
        let (kind, rows, cols) = match tensor.shape() {
            Shape::Vector(n) => (0, n, 1),
            Shape::Matrix(r, c) => (1, r, c),
        };
        t.u8(kind);
        t.u32(rows as u32);
        t.u32(cols as u32);
        for &x in tensor.data() {
            t.f64(x);
        }
    }
    w.section(&t.into_inner());

    let mut meta = ByteWriter::new();
    meta.f64(cp.best_valid_mrr);
    meta.u64(cp.epoch as u64);
    w.section(&meta.into_inner());
    Ok(w.into_inner())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes, "checkpoint");
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }

    let mut config_section = r.section()?;
    let config: TrainConfig = serde_json::from_slice(config_section.rest())
        .map_err(|e| format_err(format!("checkpoint config: {e}")))?;

    let mut cat = r.section()?;
    let catalog = read_catalog(&mut cat)?;
    cat.finish()?;

    let mut t = r.section()?;
    let count = t.count(13)?;
    if count != Slot::ALL.len() {
        return Err(format_err(format!("checkpoint has {count} tensors, expected {}", Slot::ALL.len())));
    }
    let mut set = ParamSet::new();
    for slot in Slot::ALL {
        let name = t.str()?;
        if name != slot.name() {
            return Err(format_err(format!("expected tensor {}, found {name:?}", slot.name())));
        }
        let kind = t.u8()?;
        let rows = t.u32()? as usize;
        let cols = t.u32()? as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| format_err("tensor size overflows"))?;
        let raw = t.take(len.checked_mul(8).ok_or_else(|| format_err("tensor size overflows"))?)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let tensor = match kind {
            0 if cols == 1 => Tensor::vector(data),
            1 => Tensor::matrix(rows, cols, data),
            _ => return Err(format_err(format!("invalid tensor kind {kind} for {name}"))),
        }
        .map_err(|e| format_err(format!("tensor {name}: {e}")))?;
        set.push(name, tensor);
    }
    t.finish()?;

    let mut meta = r.section()?;
    let best_valid_mrr = meta.f64()?;
    let epoch = meta.u64()? as usize;
    meta.finish()?;
    r.finish()?;

    if catalog.len() == 0 {
        return Err(format_err("checkpoint catalog is empty"));
    }
    let params = ModelParams::from_param_set(config.d, catalog.len(), set)
        .map_err(|e| format_err(format!("checkpoint parameters: {e}")))?;
    Ok(Checkpoint {
        config,
        catalog,
        params,
        best_valid_mrr,
        epoch,
    })
}

/// Writes to a sibling temporary file first, so a failed save never leaves
/// a half-written checkpoint behind.
pub fn save_checkpoint(cp: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(cp)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}
