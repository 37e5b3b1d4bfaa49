//! Named, unit-tagged parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

/// Ordered list of named parameters. Names are unique.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector {
    entries: Vec<Parameter>,
}

impl ParameterVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<Parameter>) -> Result<Self> {
        let mut out = Self::new();
        for p in entries {
            out.push(&p.name, p.value, &p.unit)?;
        }
        Ok(out)
    }

    /// Appends a parameter; fails on a duplicate name.
    pub fn push(&mut self, name: &str, value: f64, unit: &str) -> Result<()> {
        if self.contains(name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.entries.push(Parameter {
            name: name.to_string(),
            value,
            unit: unit.to_string(),
        });
        Ok(())
    }

    pub fn with(mut self, name: &str, value: f64, unit: &str) -> Result<Self> {
        self.push(name, value, unit)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.entries
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    /// Overwrites an existing parameter's value.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match self.entries.iter_mut().find(|p| p.name == name) {
            Some(p) => {
                p.value = value;
                Ok(())
            }
            None => Err(Error::Config(format!("unknown parameter `{name}`"))),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|p| p.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|p| p.name.as_str())
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|p| p.value).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
