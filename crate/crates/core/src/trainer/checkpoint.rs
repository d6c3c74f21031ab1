//! ```text
//! SCHN | u32 version=1 | u32 len + config text | u32 tensor count
//! per tensor: u16 name len + name | u8 dtype | u8 rank | rank x u64 dims | payload
//! ```
//! All little-endian. Tensors are the model parameters (running statistics
//! included) followed by `adam.m.<name>` and `adam.v.<name>` for every
//! trainable parameter.

use std::fs;
use std::path::Path;

use super::{Adam, TrainConfig};
use crate::config::{KeyValues, RunConfig};
use crate::diffnet::Hourglass;
use crate::error::{Error, FormatError, Result};
use crate::formats::{put_floats, Dtype, Reader};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SCHN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Model, optimizer state and progress of a training run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Hourglass,
    pub train: TrainConfig,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
}

struct Tensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f64]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(Dtype::F64.code());
    out.push(shape.len() as u8);
    for d in shape {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    put_floats(out, values, Dtype::F64);
}

fn read_tensor(r: &mut Reader) -> Result<Tensor, FormatError> {
    let len = r.u16()? as usize;
    let name = String::from_utf8(r.take(len)?.to_vec())
        .map_err(|_| FormatError::Invalid("tensor name is not UTF-8".into()))?;
    let dtype = Dtype::from_code(r.u8()?)?;
    let rank = r.u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for _ in 0..rank {
        let d = usize::try_from(r.u64()?).map_err(|_| FormatError::DimensionOverflow(name.clone()))?;
        count = count
            .checked_mul(d)
            .filter(|c| *c <= isize::MAX as usize / 8)
            .ok_or_else(|| FormatError::DimensionOverflow(name.clone()))?;
        shape.push(d);
    }
    let values = r.floats(dtype, count)?;
    Ok(Tensor { name, shape, values })
}

impl Checkpoint {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            model: self.model.config().clone(),
            train: self.train.clone(),
        }
    }

    fn config_text(&self) -> String {
        let mut kv = self.run_config().to_kv();
        kv.set("state.epoch", self.epoch.to_string());
        kv.set("state.adam_step", self.adam.step.to_string());
        kv.set("state.rng_seed", self.train.seed.to_string());
        kv.render()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let text = self.config_text();
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let params = self.model.params();
        let trainable = params.iter().filter(|p| p.trainable()).count();
        out.extend_from_slice(&((params.len() + 2 * trainable) as u32).to_le_bytes());
        for p in params.iter() {
            put_tensor(&mut out, p.name(), p.shape(), p.values());
        }
        for (prefix, bufs) in [("adam.m.", &self.adam.m), ("adam.v.", &self.adam.v)] {
            for (p, buf) in params.iter().zip(bufs) {
                if p.trainable() {
                    put_tensor(&mut out, &format!("{prefix}{}", p.name()), p.shape(), buf);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::VersionMismatch {
                expected: CHECKPOINT_VERSION,
                found: version,
            }
            .into());
        }
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| FormatError::Invalid("checkpoint config is not UTF-8".into()))?;
        let kv = KeyValues::parse(text)?;
        let mut run_kv = KeyValues::default();
        for (k, v) in kv.iter().filter(|(k, _)| !k.starts_with("state.")) {
            run_kv.set(k, v);
        }
        let run = RunConfig::from_kv(&run_kv)?;
        let epoch: usize = kv.parsed("state.epoch")?.unwrap_or(0);
        let step: u64 = kv.parsed("state.adam_step")?.unwrap_or(0);

        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            tensors.push(read_tensor(&mut r)?);
        }
        r.finish()?;

        let mut model = Hourglass::new(run.model, 0)?;
        let mut adam = Adam::new(model.params());
        adam.step = step;
        let mut seen = vec![false; model.params().len()];
        for t in &tensors {
            let (target, name) = if let Some(n) = t.name.strip_prefix("adam.m.") {
                (Some(&mut adam.m), n)
            } else if let Some(n) = t.name.strip_prefix("adam.v.") {
                (Some(&mut adam.v), n)
            } else {
                (None, t.name.as_str())
            };
            let id = model
                .params()
                .id(name)
                .ok_or_else(|| FormatError::Invalid(format!("unexpected tensor {}", t.name)))?;
            match target {
                None => {
                    model.params_mut().assign(name, &t.shape, &t.values)?;
                    seen[id.0] = true;
                }
                Some(bufs) => {
                    let p = model.params().get(id);
                    if !p.trainable() || p.shape() != t.shape.as_slice() {
                        return Err(FormatError::ParameterShape {
                            name: t.name.clone(),
                            expected: p.shape().to_vec(),
                            found: t.shape.clone(),
                        }
                        .into());
                    }
                    bufs[id.0].copy_from_slice(&t.values);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            let name = model.params().iter().nth(i).expect("index in range").name().to_string();
            return Err(FormatError::MissingParameter(name).into());
        }
        Ok(Checkpoint {
            model,
            train: run.train,
            adam,
            epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Copies the stored weights into an existing model, failing on the first
    /// parameter whose shape differs.
    pub fn load_into(&self, model: &mut Hourglass) -> Result<()> {
        for p in self.model.params().iter() {
            model.params_mut().assign(p.name(), p.shape(), p.values())?;
        }
        Ok(())
    }
}
