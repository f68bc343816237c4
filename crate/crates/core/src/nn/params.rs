use std::collections::BTreeMap;

use crate::tensor::{Grads, Graph, Scalar, Tensor, Var};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named, ordered collection of model parameters.
#[derive(Clone, Debug)]
pub struct ParamSet<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    lookup: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new(), lookup: BTreeMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.lookup.contains_key(&name), "duplicate parameter {name}");
        self.lookup.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).map(|&i| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            lookup: self.lookup.clone(),
        }
    }

    /// All parameters flattened into one vector, in registration order.
    pub fn flatten(&self) -> Vec<T> {
        self.values.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Inverse of [`ParamSet::flatten`].
    pub fn assign_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.num_scalars());
        let mut off = 0;
        for v in &mut self.values {
            let n = v.numel();
            v.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}

/// One forward pass: a fresh graph plus lazily bound parameters.
pub struct Ctx<'p, T: Scalar> {
    pub g: Graph<T>,
    params: &'p ParamSet<T>,
    bound: Vec<Option<Var>>,
    trainable: bool,
}

impl<'p, T: Scalar> Ctx<'p, T> {
    /// `trainable` controls whether parameters become gradient-tracked leaves.
    pub fn new(params: &'p ParamSet<T>, trainable: bool) -> Self {
        Self { g: Graph::new(), params, bound: vec![None; params.len()], trainable }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let t = self.params.get(id).clone();
        let v = if self.trainable { self.g.variable(t) } else { self.g.constant(t) };
        self.bound[id.0] = Some(v);
        v
    }

    pub fn params(&self) -> &ParamSet<T> {
        self.params
    }

    /// Gradients per parameter (in [`ParamSet`] order); `None` for unused ones.
    pub fn param_grads(&self, grads: &mut Grads<T>) -> Vec<Option<Tensor<T>>> {
        self.bound.iter().map(|b| b.and_then(|v| grads.take(v))).collect()
    }
}
