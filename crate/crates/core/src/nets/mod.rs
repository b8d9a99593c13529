//! Network parameter storage, graph binding, and the miniature segmentation
//! and discriminator architectures.

pub mod disc;
pub mod seg2d;
pub mod seg3d;

pub use disc::Discriminators;
pub use seg2d::Seg2dNet;
pub use seg3d::Seg3dNet;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};

/// Feature width shared by both segmentation streams.
pub const FEATURE_DIM: usize = 16;

/// Negative slope of every leaky ReLU in the stacks.
pub const LEAKY_SLOPE: f64 = 0.1;

/// One named, persistent parameter tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// The parameters of one network (or one optimizer group).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

/// How a parameter tensor is initialized.
enum Init {
    /// Uniform in `+-sqrt(6 / fan_in)`.
    FanIn(usize),
    Constant(f64),
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    fn add(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut ChaCha8Rng) -> ParamId {
        let n: usize = shape.iter().product();
        let value = match init {
            Init::FanIn(fan_in) => {
                let bound = (6.0 / fan_in as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
            }
            Init::Constant(c) => vec![c; n],
        };
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
            grad: vec![0.0; n],
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Total number of scalar coordinates.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Add externally collected gradients (`(param index, buffer)` pairs).
    pub fn add_grads(&mut self, grads: &[(usize, Vec<f64>)]) {
        for (idx, buf) in grads {
            let dst = &mut self.params[*idx].grad;
            debug_assert_eq!(dst.len(), buf.len());
            for (d, s) in dst.iter_mut().zip(buf) {
                *d += s;
            }
        }
    }

    /// Order-sensitive hash of all parameter value bits; detects any drift.
    pub fn value_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in &self.params {
            p.name.hash(&mut h);
            for v in &p.value {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Caches graph leaves for one network's parameters inside one graph.
///
/// Frozen binders create non-trainable leaves, so gradients never reach the
/// network (the freeze contract of adversarial phases).
pub struct Binder {
    frozen: bool,
    bound: Vec<Option<Tensor>>,
}

impl Binder {
    pub fn new(set: &ParamSet, frozen: bool) -> Self {
        Self { frozen, bound: vec![None; set.len()] }
    }

    pub fn get(&mut self, g: &mut Graph, set: &ParamSet, id: ParamId) -> Tensor {
        if let Some(t) = self.bound[id.0] {
            return t;
        }
        let p = set.param(id);
        let t = if self.frozen {
            g.constant(p.value.clone(), &p.shape).expect("parameter shape is consistent")
        } else {
            g.leaf(p.value.clone(), &p.shape).expect("parameter shape is consistent")
        };
        self.bound[id.0] = Some(t);
        t
    }

    /// Collect `(param index, gradient)` pairs after a backward pass.
    pub fn grads(&self, g: &Graph) -> Vec<(usize, Vec<f64>)> {
        if self.frozen {
            return Vec::new();
        }
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                t.and_then(|t| {
                    let grad = g.grad(t);
                    (!grad.is_empty()).then(|| (i, grad.to_vec()))
                })
            })
            .collect()
    }

    /// Accumulate gradients straight into the set.
    pub fn accumulate(&self, g: &Graph, set: &mut ParamSet) {
        let grads = self.grads(g);
        set.add_grads(&grads);
    }
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ── checkpoint format ───────────────────────────────────────────────────────

const CKPT_MAGIC: &[u8; 4] = b"UCKP";
const CKPT_VERSION: u32 = 1;

/// Serialize named parameter tensors (versioned header, little-endian).
pub fn save_params(set: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for p in set.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &p.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Load a checkpoint into an existing set; every name and shape must match.
pub fn load_params(bytes: &[u8], set: &mut ParamSet) -> Result<()> {
    let err = |m: &str| Error::Io(format!("checkpoint: {m}"));
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(err("truncated"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let read_u32 = |pos: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
    };

    if take(&mut pos, 4)? != CKPT_MAGIC {
        return Err(err("bad magic"));
    }
    if read_u32(&mut pos)? != CKPT_VERSION {
        return Err(err("unsupported version"));
    }
    let count = read_u32(&mut pos)? as usize;
    if count != set.len() {
        return Err(err(&format!("has {count} tensors, network expects {}", set.len())));
    }
    for i in 0..count {
        let name_len = read_u32(&mut pos)? as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|_| err("invalid tensor name"))?
            .to_string();
        let ndim = read_u32(&mut pos)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut pos)? as usize);
        }
        let expected = &set.params[i];
        if expected.name != name || expected.shape != shape {
            return Err(err(&format!(
                "tensor {i} is {name} {shape:?}, network expects {} {:?}",
                expected.name, expected.shape
            )));
        }
        let n: usize = shape.iter().product();
        let raw = take(&mut pos, n * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        set.params[i].value = values;
    }
    if pos != bytes.len() {
        return Err(err("trailing bytes"));
    }
    Ok(())
}
