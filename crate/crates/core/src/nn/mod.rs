//! Minimal tensor engine: convolution layers, normalization, activations
//! and their analytic gradients over `ndarray`.

pub mod gradcheck;
pub mod im2col;
pub mod layers;
mod param;
mod scalar;

pub use im2col::ConvGeom;
pub use layers::{Conv2d, ConvTranspose2d, InstanceNorm};
pub use param::Param;
pub use scalar::Scalar;

/// Anything exposing an ordered list of trainable tensors.
///
/// The order is stable and is what checkpoints and optimizer state key on.
pub trait Parameterized<T> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self)
    where
        T: Scalar,
    {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

#[cfg(test)]
mod tests;
