//! Versioned model container: magic, format version, a TOML header naming the
//! model kind and training configuration, then named little-endian entries for
//! every parameter, optimizer moment and step counter.

use std::path::Path;

use debias_core::model::{BaselineKind, RbfNetModel, TrainConfig};
use debias_core::neural::{ParamGroup, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainSection;
use crate::error::{AppError, AppResult};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 8] = b"DEBIASCK";
pub const VERSION: u32 = 1;

const DTYPE_F64: u8 = 1;
const DTYPE_U64: u8 = 2;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    /// Epoch the snapshot was taken after; absent for untrained models.
    epoch: Option<usize>,
    train: TrainSection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: BaselineKind,
    pub epoch: Option<usize>,
    pub config: TrainConfig,
    pub model: RbfNetModel,
}

enum Payload<'a> {
    F64(&'a [f64]),
    U64(u64),
}

struct Entry<'a> {
    name: String,
    shape: Vec<usize>,
    payload: Payload<'a>,
}

fn group_entries(g: &ParamGroup) -> Vec<Entry<'_>> {
    let mut out = Vec::with_capacity(3 * g.values.len() + 1);
    for (i, name) in g.names.iter().enumerate() {
        for (suffix, t) in [("", &g.values[i]), (".adam_m", &g.adam.m[i]), (".adam_v", &g.adam.v[i])] {
            out.push(Entry { name: format!("{name}{suffix}"), shape: t.shape().to_vec(), payload: Payload::F64(t.data()) });
        }
    }
    out.push(Entry { name: format!("{}.adam_step", g.prefix), shape: vec![1], payload: Payload::U64(g.adam.step) });
    out
}

pub fn encode(kind: BaselineKind, epoch: Option<usize>, cfg: &TrainConfig, model: &RbfNetModel) -> Vec<u8> {
    let header = Header { kind: kind.as_str().into(), epoch, train: TrainSection::from_config(cfg) };
    let header = toml::to_string(&header).expect("header serializes");
    let entries: Vec<Entry> = model.groups().into_iter().flat_map(group_entries).collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in &entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        let dtype = match e.payload {
            Payload::F64(_) => DTYPE_F64,
            Payload::U64(_) => DTYPE_U64,
        };
        out.push(dtype);
        out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match e.payload {
            Payload::F64(data) => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Payload::U64(v) => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated checkpoint")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

struct RawEntry {
    name: String,
    dtype: u8,
    shape: Vec<usize>,
    data: Vec<u8>,
}

fn parse_entries(r: &mut Reader) -> Result<Vec<RawEntry>, String> {
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "entry name is not UTF-8")?;
        let dtype = r.take(1)?[0];
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("entry too large")?;
        let data = r.take(n.checked_mul(8).ok_or("entry too large")?)?.to_vec();
        out.push(RawEntry { name, dtype, shape, data });
    }
    if r.pos != r.bytes.len() {
        return Err("trailing bytes after last entry".into());
    }
    Ok(out)
}

fn restore_group(g: &mut ParamGroup, entries: &mut std::collections::HashMap<String, RawEntry>) -> Result<(), String> {
    let mut take = |name: &str, dtype: u8, shape: &[usize]| -> Result<Vec<u8>, String> {
        let e = entries.remove(name).ok_or_else(|| format!("missing entry {name}"))?;
        if e.dtype != dtype {
            return Err(format!("entry {name} has dtype {}, expected {dtype}", e.dtype));
        }
        if e.shape != shape {
            return Err(format!("entry {name} has shape {:?}, expected {shape:?}", e.shape));
        }
        Ok(e.data)
    };
    let f64s = |b: Vec<u8>| b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<_>>();
    for i in 0..g.values.len() {
        let name = g.names[i].clone();
        let shape = g.values[i].shape().to_vec();
        let slots: [(&str, &mut Tensor); 3] =
            [("", &mut g.values[i]), (".adam_m", &mut g.adam.m[i]), (".adam_v", &mut g.adam.v[i])];
        for (suffix, t) in slots {
            let data = f64s(take(&format!("{name}{suffix}"), DTYPE_F64, &shape)?);
            t.data_mut().copy_from_slice(&data);
        }
    }
    let step = take(&format!("{}.adam_step", g.prefix), DTYPE_U64, &[1])?;
    g.adam.step = u64::from_le_bytes(step[..8].try_into().unwrap());
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(len)?).map_err(|_| "header is not UTF-8")?;
    let header: Header = toml::from_str(text).map_err(|e| format!("bad header: {}", e.message()))?;
    let kind: BaselineKind = header.kind.parse().map_err(|e| format!("{e}"))?;
    let config = header.train.apply(&TrainConfig::default()).map_err(|e| e.to_string())?;
    let mut model = RbfNetModel::new(kind, &config).map_err(|e| e.to_string())?;
    let mut entries: std::collections::HashMap<String, RawEntry> =
        parse_entries(&mut r)?.into_iter().map(|e| (e.name.clone(), e)).collect();
    for g in model.groups_mut() {
        restore_group(g, &mut entries)?;
    }
    if let Some(name) = entries.keys().min() {
        return Err(format!("unexpected entry {name}"));
    }
    Ok(Checkpoint { kind, epoch: header.epoch, config, model })
}

pub fn save(path: &Path, kind: BaselineKind, epoch: Option<usize>, cfg: &TrainConfig, model: &RbfNetModel) -> AppResult<()> {
    write_atomic(path, &encode(kind, epoch, cfg, model))
}

pub fn load(path: &Path) -> AppResult<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes).map_err(|reason| AppError::malformed(path, reason))
}

/// Lowercase hex SHA-256 of the file contents.
pub fn file_hash(path: &Path) -> AppResult<String> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig { input_size: 16, conv_blocks: 2, base_channels: 2, lstm_units: 4, head_hidden: 4, seed: 3, ..TrainConfig::toy() }
    }

    #[test]
    fn round_trip_preserves_every_tensor_and_counter() {
        let cfg = small();
        for kind in BaselineKind::ALL {
            let mut model = RbfNetModel::new(kind, &cfg).unwrap();
            for g in model.groups_mut() {
                g.adam.step = 17;
                g.adam.m[0].data_mut()[0] = 0.25;
            }
            let ck = decode(&encode(kind, Some(4), &cfg, &model)).unwrap();
            assert_eq!((ck.kind, ck.epoch), (kind, Some(4)));
            assert_eq!(ck.config, cfg);
            assert_eq!(ck.model, model);
        }
    }

    #[test]
    fn shape_mismatch_and_corruption_are_rejected() {
        let cfg = small();
        let model = RbfNetModel::new(BaselineKind::CnnLstm, &cfg).unwrap();
        let bytes = encode(BaselineKind::CnnLstm, None, &cfg, &model);
        let other = TrainConfig { lstm_units: 5, ..cfg.clone() };
        let wide = RbfNetModel::new(BaselineKind::CnnLstm, &other).unwrap();
        // Header of one config with the payload of another.
        let mut spliced = encode(BaselineKind::CnnLstm, None, &cfg, &wide);
        let err = decode(&spliced).unwrap_err();
        assert!(err.contains("shape"), "{err}");
        spliced.truncate(bytes.len() / 2);
        assert!(decode(&spliced).unwrap_err().contains("truncated"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).unwrap_err().contains("magic"));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(decode(&v2).unwrap_err().contains("version"));
    }
}
