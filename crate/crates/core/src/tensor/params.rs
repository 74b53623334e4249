use std::collections::HashMap;

use super::tape::{ParamBinding, Tape, Var};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// One named parameter. Frozen entries (running statistics, counters) are
/// persisted and bound but never updated by optimizers.
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor<f32>,
    pub trainable: bool,
}

/// Ordered map of hierarchical parameter names to tensors. Iteration order
/// is insertion order, which keeps builds and checkpoints deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<f32>, trainable: bool) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
            trainable,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].tensor)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<f32>> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        Ok(&mut self.entries[i].tensor)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry> {
        self.entries.iter_mut()
    }

    /// Total element count of trainable entries.
    pub fn trainable_count(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.count() as u64)
            .sum()
    }

    /// Push every entry onto a tape as a leaf and return the name → Var map.
    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<ParamBinding> {
        let mut binding = ParamBinding::default();
        for e in &self.entries {
            let leaf = tape.leaf(e.tensor.cast::<T>())?;
            binding.insert(&e.name, leaf);
        }
        Ok(binding)
    }

    /// Gradients of all trainable entries after a backward pass, keyed by
    /// name, widened/narrowed to f32 storage.
    pub fn grads<T: Scalar>(
        &self,
        tape: &Tape<T>,
        binding: &ParamBinding,
    ) -> Result<HashMap<String, Tensor<f32>>> {
        let mut out = HashMap::new();
        for e in self.entries.iter().filter(|e| e.trainable) {
            let var: Var = binding
                .get(&e.name)
                .map_err(|_| Error::MissingGrad(e.name.clone()))?;
            let g = tape
                .grad(var)
                .map_err(|_| Error::MissingGrad(e.name.clone()))?;
            out.insert(e.name.clone(), g.cast::<f32>());
        }
        Ok(out)
    }
}
