use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{aggregate_aiou, aggregate_iiou, aggregate_miou, EvalRecord};

/// Fixed-width histogram of non-negative samples. Bin `k` covers
/// `[k·w, (k+1)·w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<f64>,
    #[serde(default)]
    pub normalized: bool,
}

impl Histogram {
    pub fn new(samples: &[f64], bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::InvalidConfig(format!("histogram bin width must be positive, got {bin_width}")));
        }
        let mut counts: Vec<f64> = Vec::new();
        for &s in samples {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("histogram sample {s} is not a finite distance")));
            }
            let bin = (s / bin_width).floor() as usize;
            if bin >= counts.len() {
                counts.resize(bin + 1, 0.0);
            }
            counts[bin] += 1.0;
        }
        Ok(Histogram {
            bin_width,
            counts,
            normalized: false,
        })
    }

    /// Rescales counts into a probability distribution.
    pub fn normalize(&self) -> Histogram {
        let total: f64 = self.counts.iter().sum();
        let counts = if total > 0.0 {
            self.counts.iter().map(|c| c / total).collect()
        } else {
            self.counts.clone()
        };
        Histogram {
            bin_width: self.bin_width,
            counts,
            normalized: true,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// `bin_start,count` rows under a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{}", k as f64 * self.bin_width, c);
        }
        out
    }
}

/// Evaluation summary written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aiou: f64,
    pub miou: f64,
    pub iiou: f64,
    /// Mean IoU per class, keyed by class name.
    pub per_class: BTreeMap<String, f64>,
    pub histogram: Histogram,
    #[serde(default)]
    pub instances: usize,
    /// Instances whose prediction was empty (no border error recorded).
    #[serde(default)]
    pub degenerate_instances: usize,
}

impl EvalReport {
    /// `batch_ious` are the per-batch mean IoUs used for aIoU; `class_names`
    /// maps ids to names (ids without a name are printed as numbers).
    pub fn build(
        records: &[EvalRecord],
        batch_ious: &[f64],
        class_names: &BTreeMap<u32, String>,
        bin_width: f64,
    ) -> Result<Self> {
        let class = aggregate_miou(records)?;
        let distances: Vec<f64> = records.iter().flat_map(|r| r.border_distances.iter().copied()).collect();
        Ok(EvalReport {
            aiou: aggregate_aiou(batch_ious)?,
            miou: class.miou,
            iiou: aggregate_iiou(records)?,
            per_class: class
                .per_class
                .into_iter()
                .map(|(id, v)| (class_names.get(&id).cloned().unwrap_or_else(|| id.to_string()), v))
                .collect(),
            histogram: Histogram::new(&distances, bin_width)?,
            instances: records.len(),
            degenerate_instances: records.iter().filter(|r| r.border_distances.is_empty()).count(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>8}", "metric", "value");
        let _ = writeln!(s, "{:<12} {:>8.4}", "aIoU", self.aiou);
        let _ = writeln!(s, "{:<12} {:>8.4}", "mIoU", self.miou);
        let _ = writeln!(s, "{:<12} {:>8.4}", "iIoU", self.iiou);
        for (name, v) in &self.per_class {
            let _ = writeln!(s, "  {:<10} {:>8.4}", name, v);
        }
        s
    }
}
