use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    entries: Vec<(String, Tensor<T>)>,
    by_name: HashMap<String, usize>,
    seed: u64,
}

/// FNV-1a, used to give every parameter its own deterministic init stream.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl<T: Scalar> ParamSet<T> {
    pub fn new(seed: u64) -> Self {
        ParamSet {
            entries: Vec::new(),
            by_name: HashMap::new(),
            seed,
        }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<T>) -> ParamId {
        assert!(!self.by_name.contains_key(name), "duplicate parameter `{name}`");
        self.entries.push((name.to_string(), t));
        self.by_name.insert(name.to_string(), self.entries.len() - 1);
        ParamId(self.entries.len() - 1)
    }

    /// Gaussian init with standard deviation `std`; the stream depends only on
    /// the set's seed and the parameter name.
    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> ParamId {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ name_hash(name));
        let dist = Normal::new(0.0, std).expect("std is finite and non-negative");
        let n = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        self.insert(name, Tensor::from_f64(shape, &data).expect("shape matches data"))
    }

    /// He-normal init for a `[C_out, C_in, k, k]` kernel.
    pub fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize) -> ParamId {
        let std = (2.0 / (c_in * k * k) as f64).sqrt();
        self.normal(name, &[c_out, c_in, k, k], std)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.insert(name, Tensor::full(shape, T::from_f64_lossy(value)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].1
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Record every parameter on `g` as a trainable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        Bound(self.entries.iter().map(|(_, t)| g.param(t.clone())).collect())
    }

    /// Record every parameter as a constant (inference).
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound {
        Bound(self.entries.iter().map(|(_, t)| g.constant(t.clone())).collect())
    }

    /// Gradients of every bound parameter; zeros where no gradient reached.
    pub fn grads(&self, g: &Graph<T>, bound: &Bound) -> Vec<Vec<T>> {
        bound
            .0
            .iter()
            .zip(&self.entries)
            .map(|(&v, (_, t))| {
                g.grad(v)
                    .map(<[T]>::to_vec)
                    .unwrap_or_else(|| vec![T::zero(); t.numel()])
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
            by_name: self.by_name.clone(),
            seed: self.seed,
        }
    }

    /// Replace values from named entries (e.g. a loaded checkpoint); every
    /// parameter must be present with a matching shape.
    pub fn load_from(&mut self, named: &[(String, Tensor<f32>)]) -> Result<()> {
        if named.len() != self.entries.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} parameters, model expects {}",
                named.len(),
                self.entries.len()
            )));
        }
        for (name, t) in named {
            let id = self
                .id(name)
                .ok_or_else(|| Error::Format(format!("unexpected parameter `{name}`")))?;
            let slot = &mut self.entries[id.0].1;
            if slot.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.cast();
        }
        Ok(())
    }

    pub fn to_named_f32(&self) -> Vec<(String, Tensor<f32>)> {
        self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect()
    }
}

/// Graph handles of a bound [`ParamSet`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    /// Copy with one parameter rebound to `v` (used to differentiate with
    /// respect to a single weight tensor).
    pub fn with(&self, id: ParamId, v: Var) -> Bound {
        let mut vars = self.0.clone();
        vars[id.0] = v;
        Bound(vars)
    }
}

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}
