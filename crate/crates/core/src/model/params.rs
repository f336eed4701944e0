//! Named parameter storage with seeded initialization and digesting.
//!
//! Parameters live in a name-ordered map of candle `Var`s so that
//! initialization order, digests, and checkpoint layout are all independent
//! of insertion order.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Name-keyed trainable tensors plus non-trainable buffers (batch-norm
/// running statistics). Buffer names end in `running_mean`/`running_var`.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    device: Device,
}

pub fn is_buffer_name(name: &str) -> bool {
    name.ends_with("running_mean") || name.ends_with("running_var")
}

impl ParamStore {
    pub fn new(device: Device) -> Self {
        ParamStore {
            vars: BTreeMap::new(),
            device,
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.vars.contains_key(name) {
            return Err(Error::Model(format!("duplicate parameter name {name:?}")));
        }
        self.vars
            .insert(name.to_string(), Var::from_tensor(&tensor)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Var> {
        self.vars
            .get(name)
            .ok_or_else(|| Error::Model(format!("unknown parameter {name:?}")))
    }

    /// Tracked tensor view for building the autograd graph.
    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        Ok(self.get(name)?.as_tensor().clone())
    }

    pub fn names(&self) -> Vec<&str> {
        self.vars.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn shapes(&self) -> BTreeMap<String, Vec<usize>> {
        self.vars
            .iter()
            .map(|(n, v)| (n.clone(), v.dims().to_vec()))
            .collect()
    }

    pub fn total_elements(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Overwrite an existing parameter's value in place (used by checkpoint
    /// restore and running-stat updates). Shape must match.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self.get(name)?;
        if var.dims() != value.dims() {
            return Err(Error::Model(format!(
                "shape mismatch for {name:?}: have {:?}, got {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(value)?;
        Ok(())
    }

    /// SHA-256 over (name, shape, little-endian f32 data) of every
    /// parameter whose name passes the filter, in name order.
    pub fn digest(&self, mut filter: impl FnMut(&str) -> bool) -> Result<String> {
        let mut hasher = Sha256::new();
        for (name, var) in &self.vars {
            if !filter(name) {
                continue;
            }
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            for dim in var.dims() {
                hasher.update((*dim as u64).to_le_bytes());
            }
            let data: Vec<f32> = var.as_tensor().flatten_all()?.to_vec1()?;
            for v in data {
                hasher.update(v.to_le_bytes());
            }
        }
        let bytes = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in bytes {
            hex.push_str(&format!("{b:02x}"));
        }
        Ok(hex)
    }
}

/// Glorot/Xavier uniform: U(-l, l) with l = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(
    rng: &mut ChaCha12Rng,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    device: &Device,
) -> Result<Tensor> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let count: usize = shape.iter().product();
    let data: Vec<f32> = (0..count)
        .map(|_| rng.random_range(-limit..limit) as f32)
        .collect();
    Ok(Tensor::from_vec(data, shape, device)?)
}

/// Conv kernel init: fans derived from the kernel geometry,
/// fan_in = C_in * kh * kw, fan_out = C_out * kh * kw.
pub fn conv_init(
    rng: &mut ChaCha12Rng,
    out_c: usize,
    in_c: usize,
    kh: usize,
    kw: usize,
    device: &Device,
) -> Result<Tensor> {
    glorot_uniform(
        rng,
        &[out_c, in_c, kh, kw],
        in_c * kh * kw,
        out_c * kh * kw,
        device,
    )
}

/// Dense weight init, shape [out, in].
pub fn linear_init(
    rng: &mut ChaCha12Rng,
    out_f: usize,
    in_f: usize,
    device: &Device,
) -> Result<Tensor> {
    glorot_uniform(rng, &[out_f, in_f], in_f, out_f, device)
}

pub fn zeros(shape: &[usize], device: &Device) -> Result<Tensor> {
    Ok(Tensor::zeros(shape, DType::F32, device)?)
}

pub fn ones(shape: &[usize], device: &Device) -> Result<Tensor> {
    Ok(Tensor::ones(shape, DType::F32, device)?)
}
