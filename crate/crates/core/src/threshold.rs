//! Histogram thresholding of a fused change score: global Otsu and a
//! windowed, bilinearly blended local variant.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{CdError, Result};

pub const BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    GlobalOtsu,
    LocalAdaptive,
}

/// How the decision boundary τ is chosen.
///
/// A window (or, in global mode, the whole map) whose histogram is not
/// clearly two-class is not trusted: its value range must exceed
/// `min_contrast` × the map's range, and Otsu's separability
/// η = σ²_between / σ²_total must reach `min_separability`. Untrusted
/// windows use the global τ; an untrusted global histogram means
/// "no change anywhere".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdPolicy {
    pub mode: ThresholdMode,
    pub window: usize,
    /// Defaults to half the window.
    pub stride: Option<usize>,
    pub min_contrast: f64,
    pub min_separability: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::LocalAdaptive,
            window: 128,
            stride: None,
            min_contrast: 0.01,
            min_separability: DEFAULT_MIN_SEPARABILITY,
        }
    }
}

/// Otsu separability below which a histogram is treated as one class.
///
/// A single Gaussian reaches 2/π ≈ 0.64 and a uniform distribution 0.75;
/// two well-separated modes approach 1.
pub const DEFAULT_MIN_SEPARABILITY: f64 = 0.85;

impl ThresholdPolicy {
    pub fn global() -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::GlobalOtsu,
            ..Default::default()
        }
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.window / 2).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 16 {
            return Err(CdError::InvalidConfig(format!("window {} is below 16", self.window)));
        }
        if self.stride() > self.window {
            return Err(CdError::InvalidConfig(format!(
                "stride {} exceeds window {}",
                self.stride(),
                self.window
            )));
        }
        if !(self.min_contrast >= 0.0 && (0.0..=1.0).contains(&self.min_separability)) {
            return Err(CdError::InvalidConfig(
                "min_contrast must be non-negative and min_separability within [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Result of Otsu's search over a histogram: bins `0..=cut` form the lower
/// class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuCut {
    pub cut: usize,
    /// Between-class variance in squared bin units.
    pub between_variance: f64,
    /// σ²_between / σ²_total ∈ [0, 1].
    pub separability: f64,
}

/// Largest pixel count for which cut scores are compared exactly.
const EXACT_LIMIT: u64 = 1 << 28;

/// a·b as (high, low) words of a 192-bit product.
fn wide_mul(a: u128, b: u64) -> (u128, u64) {
    let low = (a as u64 as u128) * b as u128;
    let high = (a >> 64) * b as u128 + (low >> 64);
    (high, low as u64)
}

/// Exhaustive Otsu over all `len − 1` cuts, first maximum wins. Returns
/// `None` when fewer than two bins are occupied.
///
/// The between-class variance of cut k is N⁻²·d²/(n₀n₁) with
/// d = N·s₀ − n₀·S; candidates are compared by cross-multiplying these
/// integer quantities, so ties and near-ties resolve exactly (up to 2²⁸
/// pixels, beyond which the comparison falls back to floating point).
pub fn otsu_cut(hist: &[u64]) -> Option<OtsuCut> {
    let n: u64 = hist.iter().sum();
    let (sum, sum_sq) = hist.iter().enumerate().fold((0u128, 0u128), |(s, q), (i, &h)| {
        (s + i as u128 * h as u128, q + (i * i) as u128 * h as u128)
    });
    let total_var_n2 = n as i128 * sum_sq as i128 - (sum * sum) as i128;
    if total_var_n2 <= 0 {
        return None;
    }
    let exact = n <= EXACT_LIMIT;
    // (cut, d², n₀·n₁, score)
    let mut best: Option<(usize, u128, u64, f64)> = None;
    let (mut n0, mut s0) = (0u64, 0u128);
    for (k, &h) in hist.iter().enumerate().take(hist.len() - 1) {
        n0 += h;
        s0 += k as u128 * h as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = n as i128 * s0 as i128 - n0 as i128 * sum as i128;
        let score = (d as f64) * (d as f64) / (n0 as f64 * n1 as f64);
        let (d2, p) = if exact {
            (d.unsigned_abs().pow(2), n0 * n1)
        } else {
            (0, 0)
        };
        let better = match best {
            None => true,
            Some((_, bd2, bp, _)) if exact => wide_mul(d2, bp) > wide_mul(bd2, p),
            Some((_, _, _, bscore)) => score > bscore,
        };
        if better {
            best = Some((k, d2, p, score));
        }
    }
    best.map(|(cut, _, _, score)| OtsuCut {
        cut,
        between_variance: score / (n as f64 * n as f64),
        separability: score / total_var_n2 as f64,
    })
}

/// Bin index of `v` in `BINS` equal bins over [lo, hi], where bin j holds
/// lo + j·w < v ≤ lo + (j+1)·w (bin 0 also holds lo itself).
fn bin_of(v: f32, lo: f32, width: f64) -> usize {
    let t = ((v - lo) as f64 / width).ceil() as i64 - 1;
    t.clamp(0, BINS as i64 - 1) as usize
}

pub fn histogram<'a>(values: impl IntoIterator<Item = &'a f32>, lo: f32, hi: f32) -> Vec<u64> {
    let mut hist = vec![0u64; BINS];
    let width = (hi - lo) as f64 / BINS as f64;
    for &v in values {
        hist[bin_of(v, lo, width)] += 1;
    }
    hist
}

fn range(values: ArrayView2<f32>) -> (f32, f32) {
    values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// τ for one region, or `None` when the region is not clearly two-class.
fn region_threshold(values: ArrayView2<f32>, min_range: f64, min_separability: f64) -> Option<f32> {
    let (lo, hi) = range(values);
    if !((hi - lo) as f64 > min_range) {
        return None;
    }
    let cut = otsu_cut(&histogram(values.iter(), lo, hi))?;
    if cut.separability < min_separability {
        return None;
    }
    let width = (hi - lo) as f64 / BINS as f64;
    Some((lo as f64 + (cut.cut + 1) as f64 * width) as f32)
}

/// Global τ: the Otsu boundary, or the map maximum (nothing exceeds it)
/// when the histogram is degenerate or not separable.
pub fn global_threshold(values: ArrayView2<f32>, policy: &ThresholdPolicy) -> f32 {
    let (_, hi) = range(values);
    region_threshold(values, 0.0, policy.min_separability).unwrap_or(hi)
}

fn window_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if len <= window {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + window < len).collect();
    starts.push(len - window);
    starts.dedup();
    starts
}

/// Piecewise-linear weights of `x` between sorted `centers`.
fn interp(centers: &[f64], x: f64) -> (usize, usize, f64) {
    if centers.len() == 1 || x <= centers[0] {
        return (0, 0, 0.0);
    }
    let last = centers.len() - 1;
    if x >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= x) - 1;
    let t = (x - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, t)
}

/// Per-pixel decision boundary for `values` under `policy`.
pub fn threshold_surface(values: ArrayView2<f32>, policy: &ThresholdPolicy) -> Array2<f32> {
    let (h, w) = values.dim();
    let tau_global = global_threshold(values, policy);
    if policy.mode == ThresholdMode::GlobalOtsu {
        return Array2::from_elem((h, w), tau_global);
    }
    let (lo, hi) = range(values);
    let min_range = policy.min_contrast * (hi - lo) as f64;
    let (wh, ww) = (policy.window.min(h), policy.window.min(w));
    let rows = window_starts(h, wh, policy.stride());
    let cols = window_starts(w, ww, policy.stride());
    let center = |s: usize, len: usize| s as f64 + (len as f64 - 1.0) / 2.0;
    let rc: Vec<f64> = rows.iter().map(|&s| center(s, wh)).collect();
    let cc: Vec<f64> = cols.iter().map(|&s| center(s, ww)).collect();

    let taus = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
        let win = values.slice(s![rows[i]..rows[i] + wh, cols[j]..cols[j] + ww]);
        region_threshold(win, min_range, policy.min_separability).unwrap_or(tau_global)
    });

    Array2::from_shape_fn((h, w), |(r, c)| {
        let (i0, i1, ty) = interp(&rc, r as f64);
        let (j0, j1, tx) = interp(&cc, c as f64);
        let top = taus[[i0, j0]] as f64 * (1.0 - tx) + taus[[i0, j1]] as f64 * tx;
        let bottom = taus[[i1, j0]] as f64 * (1.0 - tx) + taus[[i1, j1]] as f64 * tx;
        (top * (1.0 - ty) + bottom * ty) as f32
    })
}

/// 1 where the value strictly exceeds the boundary.
pub fn apply_threshold(values: ArrayView2<f32>, tau: ArrayView2<f32>) -> Array2<u8> {
    ndarray::Zip::from(values)
        .and(tau)
        .map_collect(|&v, &t| u8::from(v > t))
}
