use super::{Graph, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Vec<f64>,
}

/// Named trainable tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Param)>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::Shape(format!("duplicate parameter name {name:?}")));
        }
        let grad = vec![0.0; value.len()];
        self.entries.push((name, Param { value, grad }));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(n, p)| (n.as_str(), p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, p)| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in &mut self.entries {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds the leaf gradients recorded on `graph` into the matching parameters.
    pub fn accumulate_grads(&mut self, graph: &Graph) {
        for (name, var) in graph.params() {
            if let (Some(g), Some(p)) = (graph.grad(*var), self.get_mut(name)) {
                p.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }
}
