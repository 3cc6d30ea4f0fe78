//! Reconstruction and adversarial objectives with their gradients.
//!
//! All losses use mean reduction over every element, so the relative
//! weight of the L1 term does not depend on tile size or batch size.

use ndarray::{Array, ArrayView, Dimension, Zip};

use crate::error::{CdError, Result};
use crate::nn::Scalar;

/// Probabilities are clamped to [ε, 1 − ε] before taking logs.
pub const LOG_EPS: f64 = 1e-7;

fn clamp_prob<T: Scalar>(p: T) -> T {
    p.max(T::of(LOG_EPS)).min(T::one() - T::of(LOG_EPS))
}

fn inside_clamp<T: Scalar>(p: T) -> bool {
    p > T::of(LOG_EPS) && p < T::one() - T::of(LOG_EPS)
}

fn count<T: Scalar, D: Dimension>(a: &ArrayView<T, D>) -> T {
    T::of(a.len().max(1) as f64)
}

fn same_shape<T, D: Dimension>(a: &ArrayView<T, D>, b: &ArrayView<T, D>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(CdError::ShapeMismatch(format!(
            "target {:?} vs reconstruction {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// mean |target − reconstruction|.
pub fn loss_l1<T: Scalar, D: Dimension>(target: ArrayView<T, D>, reconstruction: ArrayView<T, D>) -> Result<T> {
    same_shape(&target, &reconstruction)?;
    let n = count(&target);
    let sum = Zip::from(&target)
        .and(&reconstruction)
        .fold(T::zero(), |acc, &t, &r| acc + (t - r).abs());
    Ok(sum / n)
}

/// ∂ loss_l1 / ∂ reconstruction, with sign(0) = 0.
pub fn loss_l1_grad<T: Scalar, D: Dimension>(
    target: ArrayView<T, D>,
    reconstruction: ArrayView<T, D>,
) -> Result<Array<T, D>> {
    same_shape(&target, &reconstruction)?;
    let inv_n = T::one() / count(&target);
    Ok(Zip::from(&target).and(&reconstruction).map_collect(|&t, &r| {
        if r > t {
            inv_n
        } else if r < t {
            -inv_n
        } else {
            T::zero()
        }
    }))
}

/// Discriminator objective: −[mean log D(real) + mean log(1 − D(fake))].
pub fn loss_cgan_d<T: Scalar, D: Dimension>(d_real: ArrayView<T, D>, d_fake: ArrayView<T, D>) -> T {
    let real = d_real.iter().map(|&p| clamp_prob(p).ln()).sum::<T>() / count(&d_real);
    let fake = d_fake.iter().map(|&p| (T::one() - clamp_prob(p)).ln()).sum::<T>() / count(&d_fake);
    -(real + fake)
}

/// Gradients of [`loss_cgan_d`] with respect to the two probability maps.
pub fn loss_cgan_d_grads<T: Scalar, D: Dimension>(
    d_real: ArrayView<T, D>,
    d_fake: ArrayView<T, D>,
) -> (Array<T, D>, Array<T, D>) {
    let (nr, nf) = (count(&d_real), count(&d_fake));
    let gr = d_real.mapv(|p| if inside_clamp(p) { -T::one() / (nr * p) } else { T::zero() });
    let gf = d_fake.mapv(|p| {
        if inside_clamp(p) {
            T::one() / (nf * (T::one() - p))
        } else {
            T::zero()
        }
    });
    (gr, gf)
}

/// Non-saturating adversarial term for the generator: −mean log D(fake).
pub fn loss_g_adv<T: Scalar, D: Dimension>(d_fake: ArrayView<T, D>) -> T {
    -d_fake.iter().map(|&p| clamp_prob(p).ln()).sum::<T>() / count(&d_fake)
}

pub fn loss_g_adv_grad<T: Scalar, D: Dimension>(d_fake: ArrayView<T, D>) -> Array<T, D> {
    let n = count(&d_fake);
    d_fake.mapv(|p| if inside_clamp(p) { -T::one() / (n * p) } else { T::zero() })
}

/// Generator objective: adversarial term plus λ times the L1 term.
pub fn loss_g<T: Scalar, D: Dimension, E: Dimension>(
    d_fake: ArrayView<T, D>,
    target: ArrayView<T, E>,
    reconstruction: ArrayView<T, E>,
    lambda_l1: f64,
) -> Result<T> {
    Ok(loss_g_adv(d_fake) + T::of(lambda_l1) * loss_l1(target, reconstruction)?)
}
