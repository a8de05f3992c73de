//! Recorded time series of a run and their CSV / JSON forms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::layout::{Axis, GasId};
use crate::state::GaussianState;

/// Values indexed by axis, `None` for axes the setup does not estimate.
pub type AxisValues = [Option<f64>; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub step: u64,
    pub t: f64,
    pub delta_b: AxisValues,
    pub mean_b: AxisValues,
    /// Innovations of the measurements made during this step, in schedule
    /// order; empty at `t = 0`.
    pub innovations: Vec<f64>,
    /// One entry per configured gas pair; `None` where the pair block is
    /// not in standard form.
    pub geof: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub rng_algorithm: String,
    pub tau: f64,
    pub duration: f64,
    pub steps: u64,
    pub true_field: AxisValues,
    pub final_delta_b: AxisValues,
    pub final_mean_b: AxisValues,
    pub final_error: AxisValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub summary: RunSummary,
    pub geof_pairs: Vec<(GasId, GasId)>,
    pub samples: Vec<Sample>,
    /// Full states at each sample, kept only on request.
    #[serde(skip)]
    pub states: Vec<GaussianState>,
}

fn cell(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(v) = v {
        let _ = write!(out, "{v:e}");
    }
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn delta_b(&self, axis: Axis) -> Option<Vec<f64>> {
        self.samples.iter().map(|s| s.delta_b[axis.index()]).collect()
    }

    pub fn mean_b(&self, axis: Axis) -> Option<Vec<f64>> {
        self.samples.iter().map(|s| s.mean_b[axis.index()]).collect()
    }

    /// `var(B_axis) = ΔB²` at each sample.
    pub fn variance(&self, axis: Axis) -> Option<Vec<f64>> {
        self.delta_b(axis).map(|v| v.into_iter().map(|d| d * d).collect())
    }

    pub fn geof_series(&self, a: GasId, b: GasId) -> Option<Vec<Option<f64>>> {
        let k = self.geof_pairs.iter().position(|p| *p == (a, b) || *p == (b, a))?;
        Some(self.samples.iter().map(|s| s.geof[k]).collect())
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a record always holds the t = 0 sample")
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("t,dB_x,dB_y,dB_z,mB_x,mB_y,mB_z");
        for (a, b) in &self.geof_pairs {
            let _ = write!(h, ",geof_{}_{}", a.0, b.0);
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{:e}", s.t);
            for v in s.delta_b.iter().chain(s.mean_b.iter()).chain(s.geof.iter()) {
                cell(&mut out, *v);
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.summary).expect("summary is plain data")
    }
}
