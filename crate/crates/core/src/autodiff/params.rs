use alloc::collections::BTreeMap;
use alloc::string::String;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Named parameter tensors with per-tensor trainable flags, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams {
    entries: BTreeMap<String, Param>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor, trainable: bool) {
        self.entries
            .insert(name.into(), Param { tensor, trainable });
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.into()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.into()))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.tensor)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        self.get_mut(name)?.trainable = trainable;
        Ok(())
    }

    pub fn num_trainable(&self) -> usize {
        self.entries
            .values()
            .filter(|p| p.trainable)
            .map(|p| p.tensor.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|p| p.tensor.all_finite())
    }

    /// Binds every tensor as a named leaf on `graph`.
    pub fn bind(&self, graph: &mut Graph) -> BoundParams {
        let vars = self
            .entries
            .iter()
            .map(|(name, p)| (name.clone(), graph.param(name, p.tensor.clone(), p.trainable)))
            .collect();
        BoundParams { vars }
    }
}

/// Graph handles for a [`ModelParams`] snapshot.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.into()))
    }
}
