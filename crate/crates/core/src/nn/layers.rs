//! Layers with explicit forward caches and hand-written backward passes.
//!
//! Every `backward` accumulates into the parameter gradients (callers zero
//! them between steps) and returns the gradient with respect to the input.

use ndarray::{concatenate, s, Array2, Array4, ArrayView4, Axis, Zip};
use rand::Rng;

use super::im2col::{col2im, from_channel_major, im2col, to_channel_major, ConvGeom};
use super::{Param, Scalar};

fn param_view2<T: Scalar>(p: &Param<T>, rows: usize, cols: usize) -> ndarray::ArrayView2<'_, T> {
    p.value
        .view()
        .into_shape_with_order((rows, cols))
        .expect("parameter reshape")
}

fn add_grad2<T: Scalar>(p: &mut Param<T>, g: &Array2<T>) {
    let mut grad = p
        .grad
        .view_mut()
        .into_shape_with_order(g.dim())
        .expect("gradient reshape");
    grad += g;
}

/// Square 2-D convolution with bias. Weight layout (out, in, k, k).
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub geom: ConvGeom,
}

#[derive(Debug)]
pub struct Conv2dCache<T> {
    col: Array2<T>,
    in_dims: (usize, usize, usize, usize),
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, geom: ConvGeom) -> Self {
        let k = geom.kernel;
        Conv2d {
            weight: Param::zeros(format!("{name}.weight"), &[out_ch, in_ch, k, k]),
            bias: Param::zeros(format!("{name}.bias"), &[out_ch]),
            geom,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: ArrayView4<T>) -> (Array4<T>, Conv2dCache<T>) {
        let (n, c, _, _) = x.dim();
        assert_eq!(c, self.in_channels(), "{}: input channels", self.weight.name);
        let (col, oh, ow) = im2col(x, self.geom);
        let k = self.geom.kernel;
        let wmat = param_view2(&self.weight, self.out_channels(), c * k * k);
        let mut out = wmat.dot(&col);
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.value.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        let y = from_channel_major(out, n, oh, ow);
        (
            y,
            Conv2dCache {
                col,
                in_dims: x.dim(),
            },
        )
    }

    pub fn backward(&mut self, cache: Conv2dCache<T>, grad_out: ArrayView4<T>) -> Array4<T> {
        let (_, c, _, _) = cache.in_dims;
        let k = self.geom.kernel;
        let gm = to_channel_major(grad_out);
        let dw = gm.dot(&cache.col.t());
        add_grad2(&mut self.weight, &dw);
        let db = gm.sum_axis(Axis(1));
        self.bias.grad += &db.into_dyn();
        let wmat = param_view2(&self.weight, self.out_channels(), c * k * k);
        let dcol = wmat.t().dot(&gm);
        col2im(dcol.view(), cache.in_dims, self.geom)
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Transposed (fractionally strided) convolution with bias. Weight layout
/// (in, out, k, k).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub geom: ConvGeom,
}

#[derive(Debug)]
pub struct ConvTranspose2dCache<T> {
    x_cm: Array2<T>,
    in_dims: (usize, usize, usize, usize),
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, geom: ConvGeom) -> Self {
        let k = geom.kernel;
        ConvTranspose2d {
            weight: Param::zeros(format!("{name}.weight"), &[in_ch, out_ch, k, k]),
            bias: Param::zeros(format!("{name}.bias"), &[out_ch]),
            geom,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: ArrayView4<T>) -> (Array4<T>, ConvTranspose2dCache<T>) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels(), "{}: input channels", self.weight.name);
        let k = self.geom.kernel;
        let (oh, ow) = (self.geom.transpose_out(h), self.geom.transpose_out(w));
        let cout = self.out_channels();
        let x_cm = to_channel_major(x);
        let wmat = param_view2(&self.weight, c, cout * k * k);
        let col = wmat.t().dot(&x_cm);
        let mut y = col2im(col.view(), (n, cout, oh, ow), self.geom);
        for mut sample in y.axis_iter_mut(Axis(0)) {
            for (mut plane, &b) in sample.axis_iter_mut(Axis(0)).zip(self.bias.value.iter()) {
                plane.mapv_inplace(|v| v + b);
            }
        }
        (
            y,
            ConvTranspose2dCache {
                x_cm,
                in_dims: (n, c, h, w),
            },
        )
    }

    pub fn backward(&mut self, cache: ConvTranspose2dCache<T>, grad_out: ArrayView4<T>) -> Array4<T> {
        let (n, c, h, w) = cache.in_dims;
        let k = self.geom.kernel;
        let cout = self.out_channels();
        let (gcol, gh, gw) = im2col(grad_out, self.geom);
        debug_assert_eq!((gh, gw), (h, w));
        let dw = cache.x_cm.dot(&gcol.t());
        add_grad2(&mut self.weight, &dw);
        let db = grad_out.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
        self.bias.grad += &db.into_dyn();
        let wmat = param_view2(&self.weight, c, cout * k * k);
        let dx = wmat.dot(&gcol);
        from_channel_major(dx, n, h, w)
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Per-sample, per-channel feature normalization with a learned affine map.
#[derive(Debug, Clone)]
pub struct InstanceNorm<T> {
    pub scale: Param<T>,
    pub shift: Param<T>,
    pub eps: f64,
}

#[derive(Debug)]
pub struct InstanceNormCache<T> {
    xhat: Array4<T>,
    inv_std: Array2<T>,
}

impl<T: Scalar> InstanceNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        let mut scale = Param::zeros(format!("{name}.scale"), &[channels]);
        scale.fill(1.0);
        InstanceNorm {
            scale,
            shift: Param::zeros(format!("{name}.shift"), &[channels]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: ArrayView4<T>) -> (Array4<T>, InstanceNormCache<T>) {
        let (n, c, h, w) = x.dim();
        let m = T::of((h * w) as f64);
        let eps = T::of(self.eps);
        let mut xhat = x.to_owned();
        let mut inv_std = Array2::zeros((n, c));
        for ni in 0..n {
            for ci in 0..c {
                let mut plane = xhat.slice_mut(s![ni, ci, .., ..]);
                let mean = plane.iter().copied().sum::<T>() / m;
                let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
                let is = T::one() / (var + eps).sqrt();
                plane.mapv_inplace(|v| (v - mean) * is);
                inv_std[[ni, ci]] = is;
            }
        }
        let mut y = xhat.clone();
        for mut sample in y.axis_iter_mut(Axis(0)) {
            for ((mut plane, &g), &b) in sample
                .axis_iter_mut(Axis(0))
                .zip(self.scale.value.iter())
                .zip(self.shift.value.iter())
            {
                plane.mapv_inplace(|v| v * g + b);
            }
        }
        (y, InstanceNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: InstanceNormCache<T>, grad_out: ArrayView4<T>) -> Array4<T> {
        let (n, c, h, w) = grad_out.dim();
        let m = T::of((h * w) as f64);
        let mut dx = Array4::zeros((n, c, h, w));
        for ni in 0..n {
            for ci in 0..c {
                let g = grad_out.slice(s![ni, ci, .., ..]);
                let xh = cache.xhat.slice(s![ni, ci, .., ..]);
                let gamma = self.scale.value[ci];
                let sum_g: T = g.iter().copied().sum();
                let sum_gx: T = g.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum();
                self.scale.grad[ci] = self.scale.grad[ci] + sum_gx;
                self.shift.grad[ci] = self.shift.grad[ci] + sum_g;
                // d xhat = g * gamma; dx = inv_std / m * (m*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
                let k = gamma * cache.inv_std[[ni, ci]] / m;
                Zip::from(dx.slice_mut(s![ni, ci, .., ..]))
                    .and(&g)
                    .and(&xh)
                    .for_each(|d, &gv, &xv| *d = k * (m * gv - sum_g - xv * sum_gx));
            }
        }
        dx
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.scale, &self.shift]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.scale, &mut self.shift]
    }
}

/// Leaky rectifier; `slope = 0` gives the plain rectifier. Returns the
/// output, which doubles as the backward cache since sign(y) = sign(x).
pub fn leaky_relu<T: Scalar>(x: Array4<T>, slope: f64) -> Array4<T> {
    let a = T::of(slope);
    x.mapv_into(|v| if v > T::zero() { v } else { a * v })
}

pub fn leaky_relu_backward<T: Scalar>(out: &Array4<T>, grad_out: ArrayView4<T>, slope: f64) -> Array4<T> {
    let a = T::of(slope);
    Zip::from(out)
        .and(&grad_out)
        .map_collect(|&y, &g| if y > T::zero() { g } else { a * g })
}

pub fn tanh<T: Scalar>(x: Array4<T>) -> Array4<T> {
    x.mapv_into(|v| v.tanh())
}

pub fn tanh_backward<T: Scalar>(out: &Array4<T>, grad_out: ArrayView4<T>) -> Array4<T> {
    Zip::from(out)
        .and(&grad_out)
        .map_collect(|&y, &g| g * (T::one() - y * y))
}

pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: Array4<T>) -> Array4<T> {
    x.mapv_into(sigmoid_scalar)
}

pub fn sigmoid_backward<T: Scalar>(out: &Array4<T>, grad_out: ArrayView4<T>) -> Array4<T> {
    Zip::from(out)
        .and(&grad_out)
        .map_collect(|&y, &g| g * y * (T::one() - y))
}

/// Inverted-dropout mask: each element is 0 with probability `rate`,
/// otherwise 1/(1 − rate).
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(
    dims: (usize, usize, usize, usize),
    rate: f64,
    rng: &mut R,
) -> Array4<T> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    let keep = T::of(1.0 / (1.0 - rate));
    Array4::from_shape_simple_fn(dims, || {
        if rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    })
}

pub fn concat_channels<T: Scalar>(a: ArrayView4<T>, b: ArrayView4<T>) -> Array4<T> {
    concatenate(Axis(1), &[a, b]).expect("concat: spatial dims must agree")
}

/// Splits a channel-concatenated gradient back into its two parts.
pub fn split_channels<T: Scalar>(g: Array4<T>, first: usize) -> (Array4<T>, Array4<T>) {
    let a = g.slice(s![.., ..first, .., ..]).to_owned();
    let b = g.slice(s![.., first.., .., ..]).to_owned();
    (a, b)
}
