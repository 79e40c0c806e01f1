//! Named, ordered parameter collections.
//!
//! A [`ParamStore`] maps parameter names to tensors while preserving
//! insertion order. The order is part of the contract: the optimizer walks
//! parameters and their gradients positionally, and checkpoints must
//! serialize deterministically.

use std::collections::HashMap;

use super::{DiffError, Tape, Tensor, Var};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<(), DiffError> {
        if self.index.contains_key(name) {
            return Err(DiffError::DuplicateParam(name.to_string()));
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn require(&self, name: &str) -> Result<&Tensor, DiffError> {
        self.get(name)
            .ok_or_else(|| DiffError::UnknownParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    /// `(name, tensor)` pairs in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|s| s.as_str()).zip(self.values.iter())
    }

    pub fn value_at(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn value_at_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.values[i]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.values.iter_mut()
    }

    /// Total number of scalar coordinates across all parameters.
    pub fn coord_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// True when the two stores have identical names, order, and shapes.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.shape() == b.shape())
    }
}

/// Parameters registered as leaves on a tape, addressable by name.
pub struct BoundParams {
    names: Vec<String>,
    index: HashMap<String, usize>,
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var, DiffError> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| DiffError::UnknownParam(name.to_string()))
    }
}

impl Tape {
    /// Registers every parameter as a leaf node, preserving store order.
    pub fn bind_params(&mut self, params: &ParamStore) -> BoundParams {
        let mut vars = Vec::with_capacity(params.len());
        for (_, tensor) in params.iter() {
            vars.push(self.leaf(tensor.clone()));
        }
        BoundParams {
            names: params.names().map(str::to_string).collect(),
            index: params
                .names()
                .enumerate()
                .map(|(i, n)| (n.to_string(), i))
                .collect(),
            vars,
        }
    }

    /// Gathers accumulated gradients for bound parameters into a store with
    /// the same names and order.
    pub fn param_gradients(&self, bound: &BoundParams) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, &var) in bound.names.iter().zip(&bound.vars) {
            let shape = self.value(var).shape().to_vec();
            let grad = self.grad(var).to_vec();
            out.insert(name, Tensor::new(shape, grad).expect("grad length matches value"))
                .expect("names unique by construction");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_preserved() {
        let mut p = ParamStore::new();
        p.insert("zeta", Tensor::scalar(1.0)).unwrap();
        p.insert("alpha", Tensor::scalar(2.0)).unwrap();
        let names: Vec<&str> = p.names().collect();
        assert_eq!(names, ["zeta", "alpha"]);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::scalar(0.0)).unwrap();
        assert!(matches!(
            p.insert("w", Tensor::scalar(1.0)),
            Err(DiffError::DuplicateParam(_))
        ));
    }

    #[test]
    fn gradients_come_back_under_the_same_names() {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
        p.insert("b", Tensor::vector(vec![3.0, 4.0])).unwrap();
        let mut tape = Tape::new();
        let bound = tape.bind_params(&p);
        let a = bound.var("a").unwrap();
        let b = bound.var("b").unwrap();
        let y = tape.dot(a, b).unwrap();
        tape.backward(y).unwrap();
        let grads = tape.param_gradients(&bound);
        assert!(grads.same_layout(&p));
        assert_eq!(grads.get("a").unwrap().data(), &[3.0, 4.0]);
        assert_eq!(grads.get("b").unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn unknown_parameter_is_an_error() {
        let p = ParamStore::new();
        assert!(matches!(p.require("missing"), Err(DiffError::UnknownParam(_))));
    }
}
