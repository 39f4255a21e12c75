//! Clustering probe for spatial information in tapped network features.
//!
//! Features of one sequence are normalized per unit, clustered with L1
//! k-means into one cluster per source plus a pause cluster, and scored
//! against the ground-truth activity labels.

mod kmeans;
mod label;
mod protocol;

pub use kmeans::{kcluster_points, l1, median, CenterUpdate, ClusterModel, KConfig};
pub use label::{
    avg_center_distance, grouping_success, label_clusters, pause_fraction, Grouping, LabeledClusters, Weighting,
};
pub use protocol::{
    build_rows, evaluate_sequence, run_protocol, score_features, sequence_features, ClusterReport, ProtocolConfig,
    ReportRow, SequenceFeatures, SequenceScore, TapMetrics, TrialMetrics,
};

use crate::neural::{CMat, FeatureTrace};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Which side of the GRU a feature trace was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tap {
    Input,
    Output,
}

impl Tap {
    pub const BOTH: [Tap; 2] = [Tap::Input, Tap::Output];

    pub fn name(self) -> &'static str {
        match self {
            Tap::Input => "input",
            Tap::Output => "output",
        }
    }
}

/// How the real and imaginary parts of a unit share a scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// One scale per unit: its largest absolute real or imaginary value.
    #[default]
    Joint,
    /// Real and imaginary parts scaled independently.
    Separate,
}

/// Per-frame real feature vectors: all real parts, then all imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrace {
    pub tap: Tap,
    pub units: usize,
    /// Row-major `frames × 2·units`.
    pub data: Vec<f64>,
}

impl NormalizedTrace {
    pub fn dim(&self) -> usize {
        2 * self.units
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn frame(&self, tau: usize) -> &[f64] {
        let d = self.dim();
        &self.data[tau * d..(tau + 1) * d]
    }
}

/// Stacks complex features into real rows `[re_1..re_U, im_1..im_U]`.
pub fn stack_parts(features: &CMat) -> Vec<f64> {
    let u = features.cols;
    let mut out = vec![0.0; features.rows * 2 * u];
    for t in 0..features.rows {
        let dst = &mut out[t * 2 * u..(t + 1) * 2 * u];
        for (k, v) in features.row(t).iter().enumerate() {
            dst[k] = v.re;
            dst[u + k] = v.im;
        }
    }
    out
}

/// Scales stacked rows in place so every unit spans at most `[−1, 1]`.
pub fn normalize_stacked(data: &mut [f64], units: usize, scaling: Scaling) {
    let dim = 2 * units;
    let frames = data.len() / dim;
    let peak = |col: usize, data: &[f64]| (0..frames).map(|t| data[t * dim + col].abs()).fold(0.0, f64::max);
    for u in 0..units {
        let (s_re, s_im) = match scaling {
            Scaling::Joint => {
                let s = peak(u, data).max(peak(units + u, data));
                (s, s)
            }
            Scaling::Separate => (peak(u, data), peak(units + u, data)),
        };
        for t in 0..frames {
            if s_re > 0.0 {
                data[t * dim + u] /= s_re;
            }
            if s_im > 0.0 {
                data[t * dim + units + u] /= s_im;
            }
        }
    }
}

/// Per-unit normalization of the selected tap of `trace`.
pub fn normalize(trace: &FeatureTrace, tap: Tap, scaling: Scaling) -> Result<NormalizedTrace> {
    let features = match tap {
        Tap::Input => &trace.h_in,
        Tap::Output => &trace.h_out,
    };
    if features.rows == 0 || features.cols == 0 {
        return Err(Error::Shape("cannot normalize an empty trace".into()));
    }
    let mut data = stack_parts(features);
    normalize_stacked(&mut data, features.cols, scaling);
    Ok(NormalizedTrace {
        tap,
        units: features.cols,
        data,
    })
}

/// Clusters the frames of a normalized trace; see [`kcluster_points`].
pub fn kcluster<R: Rng + ?Sized>(
    frames: &NormalizedTrace,
    k: usize,
    attempts: usize,
    rng: &mut R,
) -> Result<ClusterModel> {
    kcluster_points(&frames.data, frames.dim(), &KConfig::new(k, attempts), rng)
}

#[cfg(test)]
mod tests;
