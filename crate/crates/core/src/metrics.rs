//! Confusion counts and the OA / SPC / SEN / ERR measures. The positive
//! class is "changed".

use std::fmt;

use ndarray::{ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{CdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Counts under the opposite positive-class convention.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

fn check_binary(a: ArrayView2<u8>, what: &str) -> Result<()> {
    if let Some(v) = a.iter().find(|&&v| v > 1) {
        return Err(CdError::NonBinaryInput(format!("{what} contains value {v}")));
    }
    Ok(())
}

pub fn confusion(predicted: ArrayView2<u8>, reference: ArrayView2<u8>) -> Result<ConfusionCounts> {
    if predicted.dim() != reference.dim() {
        return Err(CdError::ShapeMismatch(format!(
            "prediction {:?} vs reference {:?}",
            predicted.dim(),
            reference.dim()
        )));
    }
    check_binary(predicted, "prediction")?;
    check_binary(reference, "reference")?;
    let mut c = ConfusionCounts::default();
    Zip::from(predicted).and(reference).for_each(|&p, &r| match (p, r) {
        (1, 1) => c.tp += 1,
        (0, 0) => c.tn += 1,
        (1, 0) => c.fp += 1,
        _ => c.fn_ += 1,
    });
    Ok(c)
}

/// Derived measures. SPC and SEN are `None` when their denominator is zero
/// (no unchanged or no changed reference pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oa: f64,
    pub spc: Option<f64>,
    pub sen: Option<f64>,
    pub err: f64,
    pub counts: ConfusionCounts,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn report(counts: ConfusionCounts) -> Result<MetricsReport> {
    let total = counts.total();
    if total == 0 {
        return Err(CdError::InvalidConfig("cannot report on zero pixels".into()));
    }
    let oa = (counts.tp + counts.tn) as f64 / total as f64;
    Ok(MetricsReport {
        oa,
        spc: ratio(counts.tn, counts.tn + counts.fp),
        sen: ratio(counts.tp, counts.tp + counts.fn_),
        err: 1.0 - oa,
        counts,
    })
}

impl MetricsReport {
    /// Flat JSON record with `null` for undefined measures.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "oa": self.oa,
            "spc": self.spc,
            "sen": self.sen,
            "err": self.err,
            "tp": self.counts.tp,
            "tn": self.counts.tn,
            "fp": self.counts.fp,
            "fn": self.counts.fn_,
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
        writeln!(f, "{:<10}{:<10}{:<10}{:<10}", "OA", "SPC", "SEN", "ERR")?;
        writeln!(
            f,
            "{:<10}{:<10}{:<10}{:<10}",
            cell(Some(self.oa)),
            cell(self.spc),
            cell(self.sen),
            cell(Some(self.err))
        )?;
        write!(
            f,
            "tp={} tn={} fp={} fn={}",
            self.counts.tp, self.counts.tn, self.counts.fp, self.counts.fn_
        )
    }
}
