use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Buffers such as batch-norm running statistics are stored but never optimized.
    pub trainable: bool,
}

/// Named tensors of a model. Names are unique and stable; checkpoints are keyed by them.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, value, trainable });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(Error::ParamMismatch(format!(
                "{}: shape {:?} vs {:?}",
                entry.name,
                value.shape(),
                entry.value.shape()
            )));
        }
        entry.value = value;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|&id| self.is_trainable(id)).collect()
    }

    /// Trainable parameters whose names start with any of `prefixes`.
    pub fn trainable_with_prefix(&self, prefixes: &[&str]) -> Vec<ParamId> {
        self.ids()
            .filter(|&id| self.is_trainable(id) && prefixes.iter().any(|p| self.name(id).starts_with(p)))
            .collect()
    }

    pub fn num_trainable_elements(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }

    /// Overwrites values by name. Every stored parameter must be present with
    /// the same shape; the first discrepancy (in store order) is reported.
    pub fn restore<'a>(&mut self, named: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
        let ordered: Vec<(&str, &Tensor)> = named.into_iter().collect();
        let incoming: HashMap<&str, &Tensor> = ordered.iter().copied().collect();
        for entry in &self.entries {
            match incoming.get(entry.name.as_str()) {
                None => return Err(Error::ParamMismatch(format!("{} missing from checkpoint", entry.name))),
                Some(t) if t.shape() != entry.value.shape() => {
                    return Err(Error::ParamMismatch(format!(
                        "{}: checkpoint shape {:?}, model shape {:?}",
                        entry.name,
                        t.shape(),
                        entry.value.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some((extra, _)) = ordered.iter().find(|(k, _)| !self.index.contains_key(*k)) {
            return Err(Error::ParamMismatch(format!("{extra} in checkpoint but not in model")));
        }
        for entry in &mut self.entries {
            entry.value = incoming[entry.name.as_str()].clone();
        }
        Ok(())
    }
}
