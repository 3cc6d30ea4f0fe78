use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Scalar;

/// A named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: ArrayD<T>,
    pub grad: ArrayD<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Param {
            name: name.into(),
            value: ArrayD::zeros(IxDyn(shape)),
            grad: ArrayD::zeros(IxDyn(shape)),
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Overwrites the value with draws from N(mean, std²).
    pub fn fill_normal<R: Rng + ?Sized>(&mut self, mean: f64, std: f64, rng: &mut R) {
        let dist = Normal::new(mean, std).expect("std must be finite and non-negative");
        self.value
            .iter_mut()
            .for_each(|v| *v = T::of(dist.sample(rng)));
    }

    pub fn fill(&mut self, value: f64) {
        self.value.fill(T::of(value));
    }
}
