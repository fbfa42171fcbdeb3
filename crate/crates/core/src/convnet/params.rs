//! Named parameter tensors and the `SSVW` weight file.
//!
//! ```text
//! "SSVW" magic, u8 version (1), u32 tensor count
//! per tensor:
//!   name      u16 byte length + UTF-8
//!   dtype     u8 (0 = f32, 1 = f64), little-endian payload
//!   frozen    u8 (0/1)
//!   ndim      u8, then ndim × u32 dims
//!   data      product(dims) values
//! ```
//!
//! Tensors are written in name order. Momentum buffers are not persisted.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::NetworkSpec;
use crate::codec::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: [u8; 4] = *b"SSVW";
pub const PARAMS_VERSION: u8 = 1;

/// Element type of a tensor payload on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub frozen: bool,
    /// Momentum buffer; empty until the first optimizer step.
    pub velocity: Vec<f64>,
}

impl ParamTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            data,
            frozen: false,
            velocity: Vec::new(),
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }
}

/// Name → tensor store with per-tensor frozen flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, ParamTensor>,
}

impl ModelParams {
    pub fn insert(&mut self, name: impl Into<String>, t: ParamTensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&ParamTensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Data(format!("missing parameter tensor {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamTensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Data(format!("missing parameter tensor {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamTensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ParamTensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    /// Sets the frozen flag on every tensor whose name satisfies `pred`.
    pub fn set_frozen(&mut self, frozen: bool, pred: impl Fn(&str) -> bool) {
        for (name, t) in &mut self.tensors {
            if pred(name) {
                t.frozen = frozen;
            }
        }
    }

    /// Kaiming-uniform (fan-in) weights, zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::default();
        for p in spec.param_specs()? {
            let n: usize = p.shape.iter().product();
            let data = if p.is_bias {
                vec![0.0; n]
            } else {
                let bound = (6.0 / p.fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            params.insert(p.name, ParamTensor::new(p.shape, data));
        }
        Ok(params)
    }

    /// Checks that every tensor the network declares is present with the
    /// right shape.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let mut missing = Vec::new();
        for p in spec.param_specs()? {
            match self.tensors.get(&p.name) {
                None => missing.push(p.name),
                Some(t) if t.shape != p.shape => {
                    return Err(Error::Shape(format!(
                        "{}: expected {:?}, found {:?}",
                        p.name, p.shape, t.shape
                    )))
                }
                Some(_) => {}
            }
        }
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "missing parameter tensors: {missing:?}"
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self, dtype: DType) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(&PARAMS_MAGIC);
        w.u8(PARAMS_VERSION);
        w.u32(
            u32::try_from(self.tensors.len())
                .map_err(|_| Error::Data("too many tensors".into()))?,
        );
        for (name, t) in &self.tensors {
            w.str(name)?;
            w.u8(dtype as u8);
            w.u8(t.frozen as u8);
            w.u8(u8::try_from(t.shape.len()).map_err(|_| Error::Data("too many dims".into()))?);
            for &d in &t.shape {
                w.u32(u32::try_from(d).map_err(|_| Error::Data("dimension too large".into()))?);
            }
            match dtype {
                DType::F32 => t.data.iter().for_each(|&v| w.f32(v as f32)),
                DType::F64 => t.data.iter().for_each(|&v| w.f64(v)),
            }
        }
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(PARAMS_MAGIC)?;
        r.version(PARAMS_VERSION)?;
        let n = r.u32()? as usize;
        let mut params = ModelParams::default();
        for _ in 0..n {
            let name_offset = r.offset();
            let name = r.str()?;
            let dtype_offset = r.offset();
            let dtype = r.u8()?;
            let frozen = r.u8()? != 0;
            let ndim = r.u8()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or(Error::Malformed {
                    offset: dtype_offset,
                    reason: "tensor size overflows".into(),
                })?;
            let data = match dtype {
                0 => r.f32_vec(len)?.into_iter().map(f64::from).collect(),
                1 => r.f64_vec(len)?,
                other => {
                    return Err(Error::Malformed {
                        offset: dtype_offset,
                        reason: format!("unknown dtype code {other}"),
                    })
                }
            };
            if params.contains(&name) {
                return Err(Error::Malformed {
                    offset: name_offset,
                    reason: format!("duplicate tensor {name:?}"),
                });
            }
            let mut t = ParamTensor::new(shape, data);
            t.frozen = frozen;
            params.insert(name, t);
        }
        r.finish()?;
        Ok(params)
    }
}

/// Writes parameters at full (f64) precision.
pub fn save_params(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &params.to_bytes(DType::F64)?)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    ModelParams::from_bytes(&read_file(path.as_ref())?)
}

/// Keeps the convolutional tensors of `source` and attaches a freshly
/// initialized head for `target`.
///
/// Every `conv*` tensor that `target` declares is copied verbatim from
/// `source`; everything else is initialized from `seed`. With
/// `freeze_prefix`, the copied tensors are marked frozen.
pub fn replace_head(
    source: &ModelParams,
    target: &NetworkSpec,
    seed: u64,
    freeze_prefix: bool,
) -> Result<(ModelParams, NetworkSpec)> {
    let mut params = ModelParams::init(target, seed)?;
    let mut missing = Vec::new();
    for p in target.param_specs()? {
        if !p.name.starts_with("conv") {
            continue;
        }
        match source.tensors.get(&p.name) {
            None => missing.push(p.name),
            Some(src) if src.shape != p.shape => {
                return Err(Error::Shape(format!(
                    "{}: source {:?} vs target {:?}",
                    p.name, src.shape, p.shape
                )))
            }
            Some(src) => {
                let mut t = ParamTensor::new(src.shape.clone(), src.data.clone());
                t.frozen = freeze_prefix;
                params.insert(p.name, t);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "source parameters lack the convolutional prefix tensors {missing:?}"
        )));
    }
    Ok((params, target.clone()))
}
