use std::collections::HashMap;

use crate::error::{Error, Result};

/// A named tensor with its gradient accumulator.
///
/// Running normalization statistics are stored as non-trainable parameters so
/// they travel through checkpoints with everything else.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    trainable: bool,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    /// Values and gradient together, for optimizer updates.
    pub fn split_mut(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.values, &self.grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], values: Vec<f64>, trainable: bool) -> Result<ParamId> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "parameter {name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        if self.index.contains_key(name) {
            return Err(Error::Internal(format!("duplicate parameter name {name}")));
        }
        let id = self.params.len();
        self.index.insert(name.to_string(), id);
        self.params.push(Parameter {
            name: name.to_string(),
            shape: shape.to_vec(),
            grad: vec![0.0; values.len()],
            values,
            trainable,
        });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.len()).sum()
    }

    /// Overwrites values of the parameter called `name`, checking its shape.
    pub fn assign(&mut self, name: &str, shape: &[usize], values: &[f64]) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| crate::error::FormatError::MissingParameter(name.to_string()))?;
        let p = &mut self.params[id.0];
        if p.shape != shape {
            return Err(crate::error::FormatError::ParameterShape {
                name: name.to_string(),
                expected: p.shape.clone(),
                found: shape.to_vec(),
            }
            .into());
        }
        p.values.copy_from_slice(values);
        Ok(())
    }

    /// All trainable values flattened in store order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.values.iter().copied())
            .collect()
    }

    /// All trainable gradients flattened in store order.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    /// Inverse of [`ParamStore::flat_values`].
    pub fn set_flat_values(&mut self, flat: &[f64]) {
        let mut at = 0;
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            let n = p.values.len();
            p.values.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        assert_eq!(at, flat.len(), "flat parameter vector length");
    }
}
