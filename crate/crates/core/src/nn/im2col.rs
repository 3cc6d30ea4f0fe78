use ndarray::{Array2, Array4, ArrayView2, ArrayView4};

use super::Scalar;

/// Kernel size, stride and zero padding of a square 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub const fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        ConvGeom {
            kernel,
            stride,
            pad,
        }
    }

    /// Output extent of a strided convolution over `input` pixels.
    pub fn conv_out(&self, input: usize) -> usize {
        assert!(
            input + 2 * self.pad >= self.kernel,
            "input extent {input} too small for kernel {}",
            self.kernel
        );
        (input + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Output extent of the transposed convolution over `input` pixels.
    pub fn transpose_out(&self, input: usize) -> usize {
        (input - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// Unfolds `x` (N, C, H, W) into a (C·k·k, N·OH·OW) patch matrix.
pub fn im2col<T: Scalar>(x: ArrayView4<T>, g: ConvGeom) -> (Array2<T>, usize, usize) {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = (g.conv_out(h), g.conv_out(w));
    let k = g.kernel;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let ncols = n * oh * ow;
    let mut col = vec![T::zero(); c * k * k * ncols];

    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut col[row * ncols..(row + 1) * ncols];
                for ni in 0..n {
                    let src = &xs[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    let dst = &mut dst[ni * oh * ow..(ni + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    let col = Array2::from_shape_vec((c * k * k, ncols), col).expect("col shape");
    (col, oh, ow)
}

/// Adjoint of [`im2col`]: scatters-and-adds a patch matrix back into an
/// (N, C, H, W) tensor.
pub fn col2im<T: Scalar>(
    col: ArrayView2<T>,
    dims: (usize, usize, usize, usize),
    g: ConvGeom,
) -> Array4<T> {
    let (n, c, h, w) = dims;
    let (oh, ow) = (g.conv_out(h), g.conv_out(w));
    let k = g.kernel;
    let ncols = n * oh * ow;
    assert_eq!(col.dim(), (c * k * k, ncols), "col2im shape");
    let col = col.as_standard_layout();
    let cs = col.as_slice().expect("standard layout");
    let mut out = vec![T::zero(); n * c * h * w];

    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cs[row * ncols..(row + 1) * ncols];
                for ni in 0..n {
                    let dst = &mut out[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    let src = &src[ni * oh * ow..(ni + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                        let src_row = &src[oy * ow..(oy + 1) * ow];
                        for (ox, &v) in src_row.iter().enumerate() {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst_row[ix as usize] = dst_row[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
    Array4::from_shape_vec((n, c, h, w), out).expect("image shape")
}

/// (N, C, H, W) → (C, N·H·W).
pub fn to_channel_major<T: Scalar>(x: ArrayView4<T>) -> Array2<T> {
    let (n, c, h, w) = x.dim();
    x.permuted_axes([1, 0, 2, 3])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((c, n * h * w))
        .expect("channel-major reshape")
}

/// (C, N·H·W) → (N, C, H, W).
pub fn from_channel_major<T: Scalar>(m: Array2<T>, n: usize, h: usize, w: usize) -> Array4<T> {
    let c = m.nrows();
    m.as_standard_layout()
        .into_owned()
        .into_shape_with_order((c, n, h, w))
        .expect("channel-major reshape")
        .permuted_axes([1, 0, 2, 3])
        .as_standard_layout()
        .into_owned()
}
