use indexmap::IndexMap;

use crate::tensor::{add_assign, Real, Tensor};
use crate::{Error, Result};

/// Named trainable tensors with alias-based sharing.
///
/// Canonical entries own storage; an alias resolves to exactly one canonical
/// entry. Gradients accumulated through an alias land on its canonical entry,
/// so a parameter used by several layers receives the sum of all uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T: Real = f32> {
    entries: IndexMap<String, Tensor<T>>,
    aliases: IndexMap<String, String>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            entries: IndexMap::new(),
            aliases: IndexMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.entries.insert(name.into(), value);
    }

    /// Makes `alias` refer to the canonical entry `canonical`.
    pub fn alias(&mut self, alias: impl Into<String>, canonical: impl Into<String>) -> Result<()> {
        let alias = alias.into();
        let canonical = canonical.into();
        if !self.entries.contains_key(&canonical) {
            return Err(Error::MissingParam(canonical));
        }
        if self.entries.contains_key(&alias) {
            return Err(Error::Spec(format!(
                "`{alias}` is already a canonical entry"
            )));
        }
        self.aliases.insert(alias, canonical);
        Ok(())
    }

    pub fn resolve<'a>(&'a self, name: &'a str) -> &'a str {
        self.aliases.get(name).map(String::as_str).unwrap_or(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(self.resolve(name))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let key = self.resolve(name).to_string();
        self.entries.get_mut(&key)
    }

    pub fn param(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Canonical entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// `(alias, canonical)` pairs in insertion order.
    pub fn aliases(&self) -> impl Iterator<Item = (&str, &str)> {
        self.aliases.iter().map(|(a, c)| (a.as_str(), c.as_str()))
    }

    /// Number of canonical entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Scalar parameter count; each canonical entry counted once.
    pub fn num_params(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// Same entries and aliases, all values zero.
    pub fn zeros_like(&self) -> Self {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
            aliases: self.aliases.clone(),
        }
    }

    /// Adds `delta` into the entry `name` resolves to.
    pub fn accumulate(&mut self, name: &str, delta: &Tensor<T>) -> Result<()> {
        let slot = self
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        add_assign(slot, delta)
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
            aliases: self.aliases.clone(),
        }
    }

    /// Largest absolute difference over all canonical entries, `None` if the
    /// stores do not have identical layouts.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.entries.len() != other.entries.len() {
            return None;
        }
        let mut worst = 0.0f64;
        for (k, v) in &self.entries {
            worst = worst.max(v.max_abs_diff(other.entries.get(k)?)?);
        }
        Some(worst)
    }
}
