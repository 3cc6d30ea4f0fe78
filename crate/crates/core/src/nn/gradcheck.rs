//! Central finite-difference verification of analytic parameter gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Parameterized;

/// Below this magnitude both gradients are treated as zero.
const ZERO_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    pub failures: Vec<GradMismatch>,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }
}

/// |a − n| / max(|a|, |n|), with both-near-zero pairs counted as exact.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ZERO_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares the gradients currently stored in `model` against
/// `(loss(θ + h) − loss(θ − h)) / 2h` for every parameter entry, or for
/// `per_param` randomly chosen entries of each tensor.
///
/// The caller must have run the analytic backward pass for the same loss
/// beforehand.
pub fn check_model<M, F>(
    model: &mut M,
    loss: F,
    h: f64,
    tol: f64,
    per_param: Option<usize>,
    seed: u64,
) -> GradCheck
where
    M: Parameterized<f64>,
    F: Fn(&M) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheck::default();
    let n_params = model.params().len();
    for p in 0..n_params {
        let (name, len) = {
            let params = model.params();
            (params[p].name.clone(), params[p].len())
        };
        let indices: Vec<usize> = match per_param {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for i in indices {
            let original = model.params()[p].value.as_slice().expect("contiguous")[i];
            set_entry(model, p, i, original + h);
            let plus = loss(model);
            set_entry(model, p, i, original - h);
            let minus = loss(model);
            set_entry(model, p, i, original);
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = model.params()[p].grad.as_slice().expect("contiguous")[i];
            let rel = relative_error(analytic, numeric);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
            if rel > tol {
                report.failures.push(GradMismatch {
                    param: name.clone(),
                    index: i,
                    analytic,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    report
}

fn set_entry<M: Parameterized<f64>>(model: &mut M, p: usize, i: usize, v: f64) {
    model.params_mut()[p]
        .value
        .as_slice_mut()
        .expect("contiguous")[i] = v;
}
