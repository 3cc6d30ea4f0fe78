//! The generator (a three-level U-Net) and the pixel discriminator.
//!
//! Generator, for input (N, B, P, P) and base width c = 64:
//!
//! ```text
//! e1 = conv(x)                      B  → c,   P/2
//! e2 = norm(conv(lrelu(e1)))        c  → 2c,  P/4
//! e3 = norm(conv(lrelu(e2)))        2c → 4c,  P/8
//! u3 = drop(norm(up(relu(e3))))     4c → 2c,  P/4
//! u2 = drop(norm(up(relu[u3|e2])))  4c → c,   P/2
//! y  = tanh(up(relu[u2|e1]))        2c → B,   P
//! ```
//!
//! All six convolutions use 4×4 kernels, stride 2, padding 1. The noise
//! input z is realized as dropout in the two inner decoder stages.
//!
//! Discriminator: two 1×1 convolutions over the channel concatenation of
//! the conditioning tile and the candidate, `2B → h → 1`, with a leaky
//! rectifier in between and a sigmoid on top, so every pixel is judged on
//! its own.

use ndarray::{Array2, Array3, Array4, ArrayView3, ArrayView4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CdError, Result};
use crate::nn::layers::{self as l, Conv2dCache, ConvTranspose2dCache, InstanceNormCache};
use crate::nn::{Conv2d, ConvGeom, ConvTranspose2d, InstanceNorm, Param, Parameterized, Scalar};
use crate::seeding::rng_for;

const DOWN: ConvGeom = ConvGeom::new(4, 2, 1);
const PIXEL: ConvGeom = ConvGeom::new(1, 1, 0);
const WEIGHT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Dropout,
    None,
}

/// How the generator's noise input z is realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorNoise {
    pub mode: NoiseMode,
    pub dropout_rate: f64,
}

impl Default for GeneratorNoise {
    fn default() -> Self {
        GeneratorNoise {
            mode: NoiseMode::Dropout,
            dropout_rate: 0.5,
        }
    }
}

impl GeneratorNoise {
    pub const NONE: GeneratorNoise = GeneratorNoise {
        mode: NoiseMode::None,
        dropout_rate: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CdError::InvalidConfig(format!(
                "dropout rate {} must lie in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub bands: usize,
    pub base_channels: usize,
    pub leaky_slope: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            bands: 3,
            base_channels: 64,
            leaky_slope: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorSpec {
    pub bands: usize,
    pub hidden: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            bands: 3,
            hidden: 64,
            leaky_slope: 0.2,
        }
    }
}

/// Draws every parameter tensor: convolution weights from N(0, 0.02²),
/// normalization scales from N(1, 0.02²), biases and shifts zero.
fn init_params<T: Scalar>(params: Vec<&mut Param<T>>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in params {
        if p.name.ends_with(".weight") {
            p.fill_normal(0.0, WEIGHT_STD, &mut rng);
        } else if p.name.ends_with(".scale") {
            p.fill_normal(1.0, WEIGHT_STD, &mut rng);
        } else {
            p.fill(0.0);
        }
    }
}

fn check_spatial(h: usize, w: usize) -> Result<()> {
    for d in [h, w] {
        if d == 0 || d % 8 != 0 {
            return Err(CdError::BadSpatialDims(d));
        }
    }
    Ok(())
}

/// Adds a leading batch axis.
pub fn batch_of_one<T: Scalar>(x: ArrayView3<f32>) -> Array4<T> {
    x.mapv(|v| T::of(v as f64)).insert_axis(Axis(0))
}

#[derive(Debug, Clone)]
pub struct Generator<T> {
    spec: GeneratorSpec,
    down1: Conv2d<T>,
    down2: Conv2d<T>,
    norm2: InstanceNorm<T>,
    down3: Conv2d<T>,
    norm3: InstanceNorm<T>,
    up3: ConvTranspose2d<T>,
    unorm3: InstanceNorm<T>,
    up2: ConvTranspose2d<T>,
    unorm2: InstanceNorm<T>,
    up1: ConvTranspose2d<T>,
}

/// Everything the generator's backward pass needs from a forward pass.
pub struct GeneratorTape<T> {
    c_down1: Conv2dCache<T>,
    a1: Array4<T>,
    c_down2: Conv2dCache<T>,
    c_norm2: InstanceNormCache<T>,
    a2: Array4<T>,
    c_down3: Conv2dCache<T>,
    c_norm3: InstanceNormCache<T>,
    r3: Array4<T>,
    c_up3: ConvTranspose2dCache<T>,
    c_unorm3: InstanceNormCache<T>,
    mask3: Option<Array4<T>>,
    r2: Array4<T>,
    c_up2: ConvTranspose2dCache<T>,
    c_unorm2: InstanceNormCache<T>,
    mask2: Option<Array4<T>>,
    r1: Array4<T>,
    c_up1: ConvTranspose2dCache<T>,
    out: Array4<T>,
}

impl<T: Scalar> Generator<T> {
    /// A generator with all weights and biases zero (norm scales one).
    pub fn zeros(spec: GeneratorSpec) -> Self {
        let (b, c) = (spec.bands, spec.base_channels);
        Generator {
            spec,
            down1: Conv2d::new("g.down1", b, c, DOWN),
            down2: Conv2d::new("g.down2", c, 2 * c, DOWN),
            norm2: InstanceNorm::new("g.norm2", 2 * c),
            down3: Conv2d::new("g.down3", 2 * c, 4 * c, DOWN),
            norm3: InstanceNorm::new("g.norm3", 4 * c),
            up3: ConvTranspose2d::new("g.up3", 4 * c, 2 * c, DOWN),
            unorm3: InstanceNorm::new("g.unorm3", 2 * c),
            up2: ConvTranspose2d::new("g.up2", 4 * c, c, DOWN),
            unorm2: InstanceNorm::new("g.unorm2", c),
            up1: ConvTranspose2d::new("g.up1", 2 * c, b, DOWN),
        }
    }

    pub fn init(spec: GeneratorSpec, seed: u64) -> Self {
        let mut g = Self::zeros(spec);
        init_params(g.params_mut(), seed);
        g
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Number of convolution layers (down plus up).
    pub fn conv_layers(&self) -> usize {
        6
    }

    /// r = G(x, z) for a batch (N, B, P, P). `seed` fixes the dropout masks.
    pub fn forward(
        &self,
        x: ArrayView4<T>,
        noise: &GeneratorNoise,
        seed: u64,
    ) -> Result<(Array4<T>, GeneratorTape<T>)> {
        let (_, bands, h, w) = x.dim();
        if bands != self.spec.bands {
            return Err(CdError::ShapeMismatch(format!(
                "generator expects {} bands, input has {bands}",
                self.spec.bands
            )));
        }
        check_spatial(h, w)?;
        noise.validate()?;
        let slope = self.spec.leaky_slope;
        let mut rng = rng_for(seed, &[]);
        let dropout = noise.mode == NoiseMode::Dropout && noise.dropout_rate > 0.0;

        let (e1, c_down1) = self.down1.forward(x);
        let a1 = l::leaky_relu(e1.clone(), slope);
        let (pre2, c_down2) = self.down2.forward(a1.view());
        let (e2, c_norm2) = self.norm2.forward(pre2.view());
        let a2 = l::leaky_relu(e2.clone(), slope);
        let (pre3, c_down3) = self.down3.forward(a2.view());
        let (e3, c_norm3) = self.norm3.forward(pre3.view());

        let r3 = l::leaky_relu(e3, 0.0);
        let (y3, c_up3) = self.up3.forward(r3.view());
        let (mut u3, c_unorm3) = self.unorm3.forward(y3.view());
        let mask3 = dropout.then(|| l::dropout_mask(u3.dim(), noise.dropout_rate, &mut rng));
        if let Some(m) = &mask3 {
            u3 *= m;
        }

        let r2 = l::leaky_relu(l::concat_channels(u3.view(), e2.view()), 0.0);
        let (y2, c_up2) = self.up2.forward(r2.view());
        let (mut u2, c_unorm2) = self.unorm2.forward(y2.view());
        let mask2 = dropout.then(|| l::dropout_mask(u2.dim(), noise.dropout_rate, &mut rng));
        if let Some(m) = &mask2 {
            u2 *= m;
        }

        let r1 = l::leaky_relu(l::concat_channels(u2.view(), e1.view()), 0.0);
        let (y1, c_up1) = self.up1.forward(r1.view());
        let out = l::tanh(y1);

        let tape = GeneratorTape {
            c_down1,
            a1,
            c_down2,
            c_norm2,
            a2,
            c_down3,
            c_norm3,
            r3,
            c_up3,
            c_unorm3,
            mask3,
            r2,
            c_up2,
            c_unorm2,
            mask2,
            r1,
            c_up1,
            out: out.clone(),
        };
        Ok((out, tape))
    }

    /// Accumulates parameter gradients for ∂L/∂r = `grad_out` and returns
    /// ∂L/∂x.
    pub fn backward(&mut self, tape: GeneratorTape<T>, grad_out: ArrayView4<T>) -> Array4<T> {
        let slope = self.spec.leaky_slope;
        let c = self.spec.base_channels;

        let g = l::tanh_backward(&tape.out, grad_out);
        let g = self.up1.backward(tape.c_up1, g.view());
        let g = l::leaky_relu_backward(&tape.r1, g.view(), 0.0);
        let (mut g_u2, g_e1_skip) = l::split_channels(g, c);

        if let Some(m) = &tape.mask2 {
            g_u2 *= m;
        }
        let g = self.unorm2.backward(tape.c_unorm2, g_u2.view());
        let g = self.up2.backward(tape.c_up2, g.view());
        let g = l::leaky_relu_backward(&tape.r2, g.view(), 0.0);
        let (mut g_u3, g_e2_skip) = l::split_channels(g, 2 * c);

        if let Some(m) = &tape.mask3 {
            g_u3 *= m;
        }
        let g = self.unorm3.backward(tape.c_unorm3, g_u3.view());
        let g = self.up3.backward(tape.c_up3, g.view());
        let g_e3 = l::leaky_relu_backward(&tape.r3, g.view(), 0.0);

        let g = self.norm3.backward(tape.c_norm3, g_e3.view());
        let g = self.down3.backward(tape.c_down3, g.view());
        let g_e2 = g_e2_skip + l::leaky_relu_backward(&tape.a2, g.view(), slope);

        let g = self.norm2.backward(tape.c_norm2, g_e2.view());
        let g = self.down2.backward(tape.c_down2, g.view());
        let g_e1 = g_e1_skip + l::leaky_relu_backward(&tape.a1, g.view(), slope);

        self.down1.backward(tape.c_down1, g_e1.view())
    }

    /// Single-tile convenience wrapper: (B, P, P) in, (B, P, P) out.
    pub fn predict(&self, x1_patch: ArrayView3<f32>, noise: &GeneratorNoise, seed: u64) -> Result<Array3<T>> {
        let (out, _) = self.forward(batch_of_one::<T>(x1_patch).view(), noise, seed)?;
        Ok(out.index_axis_move(Axis(0), 0))
    }
}

impl<T: Scalar> Parameterized<T> for Generator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = Vec::with_capacity(20);
        v.extend(self.down1.params());
        v.extend(self.down2.params());
        v.extend(self.norm2.params());
        v.extend(self.down3.params());
        v.extend(self.norm3.params());
        v.extend(self.up3.params());
        v.extend(self.unorm3.params());
        v.extend(self.up2.params());
        v.extend(self.unorm2.params());
        v.extend(self.up1.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = Vec::with_capacity(20);
        v.extend(self.down1.params_mut());
        v.extend(self.down2.params_mut());
        v.extend(self.norm2.params_mut());
        v.extend(self.down3.params_mut());
        v.extend(self.norm3.params_mut());
        v.extend(self.up3.params_mut());
        v.extend(self.unorm3.params_mut());
        v.extend(self.up2.params_mut());
        v.extend(self.unorm2.params_mut());
        v.extend(self.up1.params_mut());
        v
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator<T> {
    spec: DiscriminatorSpec,
    conv1: Conv2d<T>,
    conv2: Conv2d<T>,
}

pub struct DiscriminatorTape<T> {
    c_conv1: Conv2dCache<T>,
    hidden: Array4<T>,
    c_conv2: Conv2dCache<T>,
    out: Array4<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn zeros(spec: DiscriminatorSpec) -> Self {
        Discriminator {
            spec,
            conv1: Conv2d::new("d.conv1", 2 * spec.bands, spec.hidden, PIXEL),
            conv2: Conv2d::new("d.conv2", spec.hidden, 1, PIXEL),
        }
    }

    pub fn init(spec: DiscriminatorSpec, seed: u64) -> Self {
        let mut d = Self::zeros(spec);
        init_params(d.params_mut(), seed);
        d
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn conv1_mut(&mut self) -> &mut Conv2d<T> {
        &mut self.conv1
    }

    pub fn conv2_mut(&mut self) -> &mut Conv2d<T> {
        &mut self.conv2
    }

    /// D(x₁, candidate) as an (N, 1, H, W) map of probabilities.
    pub fn forward(
        &self,
        x1: ArrayView4<T>,
        candidate: ArrayView4<T>,
    ) -> Result<(Array4<T>, DiscriminatorTape<T>)> {
        if x1.dim() != candidate.dim() {
            return Err(CdError::ShapeMismatch(format!(
                "conditioning tile {:?} vs candidate {:?}",
                x1.dim(),
                candidate.dim()
            )));
        }
        if x1.dim().1 != self.spec.bands {
            return Err(CdError::ShapeMismatch(format!(
                "discriminator expects {} bands, input has {}",
                self.spec.bands,
                x1.dim().1
            )));
        }
        let input = l::concat_channels(x1, candidate);
        let (pre1, c_conv1) = self.conv1.forward(input.view());
        let hidden = l::leaky_relu(pre1, self.spec.leaky_slope);
        let (pre2, c_conv2) = self.conv2.forward(hidden.view());
        let out = l::sigmoid(pre2);
        let tape = DiscriminatorTape {
            c_conv1,
            hidden,
            c_conv2,
            out: out.clone(),
        };
        Ok((out, tape))
    }

    /// Accumulates parameter gradients and returns ∂L/∂candidate.
    pub fn backward(&mut self, tape: DiscriminatorTape<T>, grad_out: ArrayView4<T>) -> Array4<T> {
        let g = l::sigmoid_backward(&tape.out, grad_out);
        let g = self.conv2.backward(tape.c_conv2, g.view());
        let g = l::leaky_relu_backward(&tape.hidden, g.view(), self.spec.leaky_slope);
        let g = self.conv1.backward(tape.c_conv1, g.view());
        l::split_channels(g, self.spec.bands).1
    }

    /// Per-pixel score map of a single tile pair.
    pub fn score(&self, x1_patch: ArrayView3<f32>, candidate: ArrayView3<f32>) -> Result<Array2<T>> {
        let (out, _) = self.forward(
            batch_of_one::<T>(x1_patch).view(),
            batch_of_one::<T>(candidate).view(),
        )?;
        Ok(out.index_axis_move(Axis(0), 0).index_axis_move(Axis(0), 0))
    }
}

impl<T: Scalar> Parameterized<T> for Discriminator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.conv1.params().into_iter().chain(self.conv2.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.conv1
            .params_mut()
            .into_iter()
            .chain(self.conv2.params_mut())
            .collect()
    }
}

/// The trained pair, in single precision.
#[derive(Debug, Clone)]
pub struct Networks {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
}

impl Networks {
    /// Initializes both networks; the discriminator draws from a seed
    /// derived from `seed` so the two never share a stream.
    pub fn init(generator: GeneratorSpec, discriminator: DiscriminatorSpec, seed: u64) -> Result<Self> {
        if generator.bands != discriminator.bands {
            return Err(CdError::InvalidConfig(format!(
                "generator has {} bands, discriminator {}",
                generator.bands, discriminator.bands
            )));
        }
        Ok(Networks {
            generator: Generator::init(generator, crate::seeding::derive_seed(seed, &[0])),
            discriminator: Discriminator::init(discriminator, crate::seeding::derive_seed(seed, &[1])),
        })
    }

    pub fn bands(&self) -> usize {
        self.generator.spec().bands
    }
}
