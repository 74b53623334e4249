//! Checkpoint format: magic `PFCA`, version u16 LE, entry count u32 LE;
//! per entry: name length u16 LE + UTF-8 name, rank u8, dims u32 LE,
//! f32 LE payload. Parameters, optimizer slots, and loop state all travel
//! as entries; the round trip is bit-exact.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{Model, ModelSpec};
use crate::tensor::Shape;

const MAGIC: &[u8; 4] = b"PFCA";
const VERSION: u16 = 1;

const META_SPEC: &str = "meta.spec";
const META_STATE: &str = "meta.state";

/// Loop bookkeeping persisted alongside the parameters.
#[derive(Debug, Clone, Default)]
pub struct TrainState {
    pub step: u64,
    pub lr: f64,
    pub best_metric: Option<f64>,
}

struct Entry {
    name: String,
    dims: Vec<u32>,
    data: Vec<f32>,
}

fn write_entries(path: &Path, entries: &[Entry]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        let name = e.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(e.dims.len() as u8);
        for d in &e.dims {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        for v in &e.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn read_entries(path: &Path) -> Result<Vec<Entry>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |reason: String| Error::Format {
        path: path.display().to_string(),
        reason,
    };
    if bytes.len() < 10 || &bytes[0..4] != MAGIC {
        return Err(fail("missing PFCA magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let mut off = 10;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        if off + 2 > bytes.len() {
            return Err(fail("truncated entry header".into()));
        }
        let name_len = u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap()) as usize;
        off += 2;
        if off + name_len + 1 > bytes.len() {
            return Err(fail("truncated entry name".into()));
        }
        let name = String::from_utf8(bytes[off..off + name_len].to_vec())
            .map_err(|_| fail("entry name is not UTF-8".into()))?;
        off += name_len;
        let rank = bytes[off] as usize;
        off += 1;
        let mut dims = Vec::with_capacity(rank);
        let mut count_elems = 1usize;
        for _ in 0..rank {
            if off + 4 > bytes.len() {
                return Err(fail("truncated dims".into()));
            }
            let d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            dims.push(d);
            count_elems *= d as usize;
            off += 4;
        }
        if off + 4 * count_elems > bytes.len() {
            return Err(fail(format!("truncated payload for {name}")));
        }
        let data: Vec<f32> = bytes[off..off + 4 * count_elems]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += 4 * count_elems;
        entries.push(Entry { name, dims, data });
    }
    Ok(entries)
}

/// Serializes model parameters, optimizer slots, and loop state.
pub fn save_checkpoint(
    model: &Model,
    opt_slots: &[(String, Vec<f32>)],
    state: &TrainState,
    path: &Path,
) -> Result<()> {
    let spec = model.spec.encode();
    let mut entries = vec![
        Entry {
            name: META_SPEC.into(),
            dims: vec![spec.len() as u32],
            data: spec,
        },
        Entry {
            name: META_STATE.into(),
            dims: vec![4],
            data: vec![
                state.step as f32,
                state.lr as f32,
                state.best_metric.is_some() as u8 as f32,
                state.best_metric.unwrap_or(0.0) as f32,
            ],
        },
    ];
    for e in model.store.iter() {
        let d = e.tensor.shape().dims();
        entries.push(Entry {
            name: format!("param.{}", e.name),
            dims: d.iter().map(|&x| x as u32).collect(),
            data: e.tensor.data().to_vec(),
        });
    }
    for (name, data) in opt_slots {
        entries.push(Entry {
            name: name.clone(),
            dims: vec![data.len() as u32],
            data: data.clone(),
        });
    }
    write_entries(path, &entries)
}

pub struct LoadedCheckpoint {
    pub model: Model,
    pub opt_slots: HashMap<String, Vec<f32>>,
    pub state: TrainState,
}

/// Rebuilds the model recorded in the checkpoint and restores every entry.
pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let entries = read_entries(path)?;
    let spec_entry = entries
        .iter()
        .find(|e| e.name == META_SPEC)
        .ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            reason: "missing model spec entry".into(),
        })?;
    let spec = ModelSpec::decode(&spec_entry.data)?;
    let mut model = Model::build(&spec, 0)?;
    let state = restore_entries(&entries, &mut model, path)?;
    let mut opt_slots = HashMap::new();
    for e in &entries {
        if e.name.starts_with("opt.") {
            opt_slots.insert(e.name.clone(), e.data.clone());
        }
    }
    Ok(LoadedCheckpoint {
        model,
        opt_slots,
        state,
    })
}

/// Restores parameters into an existing model, verifying names and shapes.
pub fn restore_into(model: &mut Model, path: &Path) -> Result<TrainState> {
    let entries = read_entries(path)?;
    restore_entries(&entries, model, path)
}

fn restore_entries(entries: &[Entry], model: &mut Model, path: &Path) -> Result<TrainState> {
    let mut state = TrainState::default();
    let mut seen = 0usize;
    for e in entries {
        if e.name == META_STATE {
            state.step = e.data[0] as u64;
            state.lr = e.data[1] as f64;
            state.best_metric = (e.data[2] != 0.0).then(|| e.data[3] as f64);
            continue;
        }
        let Some(param) = e.name.strip_prefix("param.") else {
            continue;
        };
        let stored_shape = decode_shape(&e.dims).ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            reason: format!("bad dims for {param}"),
        })?;
        let tensor = model.store.get_mut(param)?;
        if tensor.shape() != stored_shape {
            return Err(Error::CheckpointShape {
                name: param.to_string(),
                stored: stored_shape.to_string(),
                expected: tensor.shape().to_string(),
            });
        }
        tensor.data_mut().copy_from_slice(&e.data);
        seen += 1;
    }
    if seen != model.store.len() {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!(
                "checkpoint restored {seen} of {} model tensors",
                model.store.len()
            ),
        });
    }
    Ok(state)
}

fn decode_shape(dims: &[u32]) -> Option<Shape> {
    let mut d = [1usize; 4];
    if dims.is_empty() || dims.len() > 4 {
        return None;
    }
    for (slot, &v) in d.iter_mut().zip(dims) {
        *slot = v as usize;
    }
    Shape::new(d[0], d[1], d[2], d[3]).ok()
}
