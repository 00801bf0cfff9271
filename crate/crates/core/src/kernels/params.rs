//! Flat, named, bounded hyperparameter vector.
//!
//! Optimizers work in the *transformed* space: log for positive-only
//! quantities, identity otherwise. An entry whose bounds coincide is fixed
//! and excluded from the free coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Log,
    Identity,
}

impl Transform {
    pub fn forward(self, v: f64) -> f64 {
        match self {
            Transform::Log => v.ln(),
            Transform::Identity => v,
        }
    }

    pub fn inverse(self, x: f64) -> f64 {
        match self {
            Transform::Log => x.exp(),
            Transform::Identity => x,
        }
    }

    /// d(value)/d(transformed value) at `v`.
    pub fn jacobian(self, v: f64) -> f64 {
        match self {
            Transform::Log => v,
            Transform::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub transform: Transform,
}

impl ParamEntry {
    pub fn new(name: impl Into<String>, value: f64, lower: f64, upper: f64, transform: Transform) -> Result<Self> {
        let e = Self { name: name.into(), value, lower, upper, transform };
        e.validate()?;
        Ok(e)
    }

    pub fn positive(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::new(name, value, lower, upper, Transform::Log)
    }

    pub fn real(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::new(name, value, lower, upper, Transform::Identity)
    }

    pub fn fixed(name: impl Into<String>, value: f64, transform: Transform) -> Result<Self> {
        Self::new(name, value, value, value, transform)
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.name;
        if self.value.is_nan() || self.lower.is_nan() || self.upper.is_nan() {
            return Err(Error::invalid(format!("parameter '{n}' has NaN value or bound")));
        }
        if !self.value.is_finite() {
            return Err(Error::invalid(format!("parameter '{n}' has non-finite value")));
        }
        if self.lower > self.upper {
            return Err(Error::invalid(format!("parameter '{n}': lower bound {} > upper bound {}", self.lower, self.upper)));
        }
        if self.value < self.lower || self.value > self.upper {
            return Err(Error::invalid(format!(
                "parameter '{n}' = {} outside [{}, {}]",
                self.value, self.lower, self.upper
            )));
        }
        if self.transform == Transform::Log && self.lower <= 0.0 {
            return Err(Error::invalid(format!("log-transformed parameter '{n}' needs a positive lower bound")));
        }
        Ok(())
    }

    pub fn is_free(&self) -> bool {
        self.lower < self.upper
    }

    pub fn transformed(&self) -> f64 {
        self.transform.forward(self.value)
    }

    pub fn transformed_bounds(&self) -> (f64, f64) {
        (self.transform.forward(self.lower), self.transform.forward(self.upper))
    }

    /// Set from a transformed coordinate, clamped into the bounds.
    pub fn set_transformed(&mut self, x: f64) {
        self.value = self.transform.inverse(x).clamp(self.lower, self.upper);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    entries: Vec<ParamEntry>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<ParamEntry>) -> Result<Self> {
        let mut v = Self::new();
        for e in entries {
            v.push(e)?;
        }
        Ok(v)
    }

    /// Append an entry, returning its slot index.
    pub fn push(&mut self, entry: ParamEntry) -> Result<usize> {
        entry.validate()?;
        if self.index_of(&entry.name).is_some() {
            return Err(Error::invalid(format!("duplicate parameter name '{}'", entry.name)));
        }
        self.entries.push(entry);
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, idx: usize) -> &ParamEntry {
        &self.entries[idx]
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.entries[idx].value
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.entries[i].value)
    }

    pub fn entry_mut(&mut self, name: &str) -> Result<&mut ParamEntry> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::config(format!("unknown parameter '{name}'")))?;
        Ok(&mut self.entries[i])
    }

    /// Override value and/or bounds of a named entry, re-validating it.
    pub fn update(&mut self, name: &str, value: Option<f64>, lower: Option<f64>, upper: Option<f64>) -> Result<()> {
        let e = self.entry_mut(name)?;
        let mut next = e.clone();
        if let Some(l) = lower {
            next.lower = l;
        }
        if let Some(u) = upper {
            next.upper = u;
        }
        match value {
            Some(v) => next.value = v,
            None => next.value = next.value.clamp(next.lower, next.upper),
        }
        next.validate().map_err(|err| Error::config(err.to_string()))?;
        *e = next;
        Ok(())
    }

    pub fn set_value(&mut self, idx: usize, value: f64) -> Result<()> {
        let mut next = self.entries[idx].clone();
        next.value = value;
        next.validate()?;
        self.entries[idx] = next;
        Ok(())
    }

    /// Slot indices of the free (non-fixed) entries, in order.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].is_free()).collect()
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free_indices().into_iter().map(|i| self.entries[i].name.clone()).collect()
    }

    /// Transformed values of the free entries.
    pub fn free_values(&self) -> Vec<f64> {
        self.free_indices().into_iter().map(|i| self.entries[i].transformed()).collect()
    }

    pub fn free_bounds(&self) -> Vec<(f64, f64)> {
        self.free_indices().into_iter().map(|i| self.entries[i].transformed_bounds()).collect()
    }

    /// Copy with the free entries replaced from transformed coordinates.
    pub fn with_free_values(&self, x: &[f64]) -> Result<Self> {
        let free = self.free_indices();
        if free.len() != x.len() {
            return Err(Error::invalid(format!("expected {} free values, got {}", free.len(), x.len())));
        }
        let mut out = self.clone();
        for (&i, &xi) in free.iter().zip(x) {
            if !xi.is_finite() {
                return Err(Error::invalid(format!("non-finite value for '{}'", self.entries[i].name)));
            }
            out.entries[i].set_transformed(xi);
        }
        Ok(out)
    }

    /// Concatenate two vectors; names must stay unique.
    pub fn concat(&self, other: &ParamVector) -> Result<Self> {
        let mut out = self.clone();
        for e in &other.entries {
            out.push(e.clone())?;
        }
        Ok(out)
    }
}
