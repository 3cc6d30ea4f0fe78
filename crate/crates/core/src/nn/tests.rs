use ndarray::{Array4, ArrayView4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::gradcheck::{check_model, relative_error};
use super::layers::*;
use super::*;

const H: f64 = 1e-5;
const TOL: f64 = 1e-3;

fn randn(dims: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_simple_fn(dims, || StandardNormal.sample(&mut rng))
}

fn randomize(params: Vec<&mut Param<f64>>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in params {
        p.fill_normal(0.0, 0.3, &mut rng);
    }
}

/// Projection loss L = Σ y ⊙ r, so ∂L/∂y = r.
fn project(y: &Array4<f64>, r: &Array4<f64>) -> f64 {
    (y * r).sum()
}

/// Finite-difference check of the input gradient of `f` at `x`.
fn check_input_grad(x: &Array4<f64>, analytic: &Array4<f64>, f: impl Fn(&Array4<f64>) -> f64) {
    let mut worst = 0.0f64;
    for idx in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.as_slice_mut().unwrap()[idx] += H;
        xm.as_slice_mut().unwrap()[idx] -= H;
        let numeric = (f(&xp) - f(&xm)) / (2.0 * H);
        let a = analytic.as_slice().unwrap()[idx];
        worst = worst.max(relative_error(a, numeric));
    }
    assert!(worst <= TOL, "input gradient relative error {worst}");
}

struct Wrap<L>(L);

macro_rules! impl_wrap {
    ($ty:ident) => {
        impl Parameterized<f64> for Wrap<$ty<f64>> {
            fn params(&self) -> Vec<&Param<f64>> {
                self.0.params().into_iter().collect()
            }
            fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
                self.0.params_mut().into_iter().collect()
            }
        }
    };
}
impl_wrap!(Conv2d);
impl_wrap!(ConvTranspose2d);
impl_wrap!(InstanceNorm);

#[test]
fn conv2d_gradients() {
    for (geom, cin, cout) in [(ConvGeom::new(4, 2, 1), 2, 3), (ConvGeom::new(1, 1, 0), 4, 2)] {
        let mut m = Wrap(Conv2d::<f64>::new("conv", cin, cout, geom));
        randomize(m.params_mut(), 1);
        let x = randn((2, cin, 8, 8), 2);
        let (y, cache) = m.0.forward(x.view());
        let r = randn(y.dim(), 3);
        m.zero_grad();
        let dx = m.0.backward(cache, r.view());
        let report = check_model(&mut m, |m| project(&m.0.forward(x.view()).0, &r), H, TOL, None, 0);
        assert!(report.passed(), "{report:?}");
        check_input_grad(&x, &dx, |x| project(&m.0.forward(x.view()).0, &r));
    }
}

#[test]
fn conv2d_matches_direct_convolution() {
    let geom = ConvGeom::new(4, 2, 1);
    let mut conv = Conv2d::<f64>::new("conv", 2, 3, geom);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    conv.weight.fill_normal(0.0, 1.0, &mut rng);
    conv.bias.fill_normal(0.0, 1.0, &mut rng);
    let x = randn((1, 2, 6, 6), 10);
    let (y, _) = conv.forward(x.view());
    assert_eq!(y.dim(), (1, 3, 3, 3));
    for o in 0..3 {
        for oy in 0..3 {
            for ox in 0..3 {
                let mut acc = conv.bias.value[o];
                for c in 0..2 {
                    for ki in 0..4 {
                        for kj in 0..4 {
                            let iy = (oy * 2 + ki) as isize - 1;
                            let ix = (ox * 2 + kj) as isize - 1;
                            if (0..6).contains(&iy) && (0..6).contains(&ix) {
                                acc += conv.weight.value[[o, c, ki, kj]] * x[[0, c, iy as usize, ix as usize]];
                            }
                        }
                    }
                }
                assert!((acc - y[[0, o, oy, ox]]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn conv_transpose_gradients() {
    let mut m = Wrap(ConvTranspose2d::<f64>::new("up", 3, 2, ConvGeom::new(4, 2, 1)));
    randomize(m.params_mut(), 4);
    let x = randn((2, 3, 4, 4), 5);
    let (y, cache) = m.0.forward(x.view());
    assert_eq!(y.dim(), (2, 2, 8, 8));
    let r = randn(y.dim(), 6);
    m.zero_grad();
    let dx = m.0.backward(cache, r.view());
    let report = check_model(&mut m, |m| project(&m.0.forward(x.view()).0, &r), H, TOL, None, 0);
    assert!(report.passed(), "{report:?}");
    check_input_grad(&x, &dx, |x| project(&m.0.forward(x.view()).0, &r));
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    // With shared weights, <conv(x), y> == <x, convT(y)> when biases are zero.
    let geom = ConvGeom::new(4, 2, 1);
    let mut conv = Conv2d::<f64>::new("c", 3, 2, geom);
    let mut up = ConvTranspose2d::<f64>::new("u", 2, 3, geom);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    conv.weight.fill_normal(0.0, 1.0, &mut rng);
    up.weight.value = conv.weight.value.clone();
    let x = randn((1, 3, 8, 8), 12);
    let y = randn((1, 2, 4, 4), 13);
    let lhs = (&conv.forward(x.view()).0 * &y).sum();
    let rhs = (&x * &up.forward(y.view()).0).sum();
    assert!((lhs - rhs).abs() < 1e-9);
}

#[test]
fn instance_norm_gradients() {
    let mut m = Wrap(InstanceNorm::<f64>::new("norm", 3));
    randomize(m.params_mut(), 7);
    let x = randn((2, 3, 4, 4), 8);
    let (y, cache) = m.0.forward(x.view());
    let r = randn(y.dim(), 9);
    m.zero_grad();
    let dx = m.0.backward(cache, r.view());
    let report = check_model(&mut m, |m| project(&m.0.forward(x.view()).0, &r), H, TOL, None, 0);
    assert!(report.passed(), "{report:?}");
    check_input_grad(&x, &dx, |x| project(&m.0.forward(x.view()).0, &r));
}

#[test]
fn instance_norm_standardizes_each_plane() {
    let norm = InstanceNorm::<f64>::new("norm", 2);
    let x = randn((1, 2, 5, 5), 1).mapv(|v| 3.0 * v + 7.0);
    let (y, _) = norm.forward(x.view());
    for c in 0..2 {
        let plane = y.slice(ndarray::s![0, c, .., ..]);
        let mean = plane.mean().unwrap();
        let var = plane.mapv(|v| (v - mean).powi(2)).mean().unwrap();
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-3);
    }
}

fn elementwise_check(fwd: impl Fn(Array4<f64>) -> Array4<f64>, bwd: impl Fn(&Array4<f64>, ArrayView4<f64>) -> Array4<f64>) {
    let x = randn((1, 2, 4, 4), 21);
    let r = randn(x.dim(), 22);
    let y = fwd(x.clone());
    let dx = bwd(&y, r.view());
    check_input_grad(&x, &dx, |x| project(&fwd(x.clone()), &r));
}

#[test]
fn activation_gradients() {
    elementwise_check(|x| leaky_relu(x, 0.2), |y, g| leaky_relu_backward(y, g, 0.2));
    elementwise_check(|x| leaky_relu(x, 0.0), |y, g| leaky_relu_backward(y, g, 0.0));
    elementwise_check(tanh, tanh_backward);
    elementwise_check(sigmoid, sigmoid_backward);
}

#[test]
fn sigmoid_is_stable_for_large_inputs() {
    assert_eq!(sigmoid_scalar(-1000.0f64), 0.0);
    assert_eq!(sigmoid_scalar(1000.0f64), 1.0);
    assert_eq!(sigmoid_scalar(0.0f32), 0.5);
}

#[test]
fn dropout_mask_keeps_expected_fraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m: Array4<f64> = dropout_mask((4, 8, 16, 16), 0.5, &mut rng);
    let kept = m.iter().filter(|&&v| v > 0.0).count() as f64 / m.len() as f64;
    assert!((kept - 0.5).abs() < 0.03);
    assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
    let none: Array4<f64> = dropout_mask((1, 1, 4, 4), 0.0, &mut rng);
    assert!(none.iter().all(|&v| v == 1.0));
}

#[test]
fn split_inverts_concat() {
    let a = randn((2, 3, 4, 4), 1);
    let b = randn((2, 2, 4, 4), 2);
    let c = concat_channels(a.view(), b.view());
    let (a2, b2) = split_channels(c, 3);
    assert_eq!(a, a2);
    assert_eq!(b, b2);
}
