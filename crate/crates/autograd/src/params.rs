use std::sync::Arc;

use crate::tensor::{Real, Tensor};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Ordered, named collection of learnable tensors.
///
/// Values are reference counted so binding them into a graph does not copy.
/// Mutation goes through copy-on-write.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Arc<Tensor<T>>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn shared(&self, id: ParamId) -> Arc<Tensor<T>> {
        Arc::clone(&self.values[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v.as_ref()))
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Arc::new(v.cast())).collect(),
        }
    }
}

/// Per-parameter gradient buffers, aligned with a [`ParamStore`].
///
/// `None` means no gradient reached the parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn empty(len: usize) -> Self {
        Self {
            grads: vec![None; len],
        }
    }

    pub fn from_vec(grads: Vec<Option<Vec<T>>>) -> Self {
        Self { grads }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.grads[id.0].as_deref()
    }

    pub fn set(&mut self, id: ParamId, grad: Vec<T>) {
        self.grads[id.0] = Some(grad);
    }

    /// Elementwise `self += other`. Buffers missing on one side are copied.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (dst, src) in self.grads.iter_mut().zip(&other.grads) {
            match (dst.as_mut(), src) {
                (_, None) => {}
                (None, Some(s)) => *dst = Some(s.clone()),
                (Some(d), Some(s)) => {
                    for (a, &b) in d.iter_mut().zip(s) {
                        *a += b;
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.grads.iter_mut().flatten() {
            for x in g.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, Option<&[T]>)> {
        self.grads
            .iter()
            .enumerate()
            .map(|(i, g)| (ParamId(i), g.as_deref()))
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().flatten().all(|x| x.is_finite())
    }
}
