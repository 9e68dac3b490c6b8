use std::collections::HashMap;

use super::rng::Draws;
use super::scalar::Scalar;
use super::tensor::Tensor;

/// A named trainable leaf tensor.
#[derive(Clone)]
pub struct Parameter<S: Scalar> {
    name: String,
    tensor: Tensor<S>,
}

impl<S: Scalar> Parameter<S> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor<S> {
        &self.tensor
    }
}

/// Ordered registry of every trainable tensor in a model.
///
/// Registration order is the storage order in checkpoints and the update
/// order in the optimizer, so it must be deterministic; model builders
/// register in a fixed traversal.
pub struct ParamSet<S: Scalar> {
    entries: Vec<Parameter<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Default for ParamSet<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new(), index: HashMap::new() }
    }

    /// Registers `tensor` under `name`, enables its gradient, and returns
    /// a handle for the model to keep.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> Tensor<S> {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        tensor.enable_grad();
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(Parameter { name, tensor: tensor.clone() });
        tensor
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Tensor<S> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_ones(&mut self, name: impl Into<String>, shape: &[usize]) -> Tensor<S> {
        self.add(name, Tensor::full(shape, S::one()))
    }

    /// Gaussian init with explicit standard deviation.
    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        draws: &mut Draws,
    ) -> Tensor<S> {
        let n: usize = shape.iter().product();
        let data: Vec<S> = (0..n).map(|_| S::from_f64_lossy(draws.normal_f64() * std)).collect();
        self.add(name, Tensor::from_vec(shape, data).expect("consistent shape"))
    }

    /// Gaussian init scaled by `1/sqrt(fan_in)`. The caller states the
    /// fan-in because linear weights are `[Cin, Cout]` while conv weights
    /// put the input channels second.
    pub fn add_fanin(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        draws: &mut Draws,
    ) -> Tensor<S> {
        self.add_normal(name, shape, 1.0 / (fan_in.max(1) as f64).sqrt(), draws)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| self.entries[i].tensor())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<S>> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grads(&self) {
        for p in &self.entries {
            p.tensor.zero_grad();
        }
    }
}
