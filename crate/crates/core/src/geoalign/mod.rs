//! Pose-distance metric kernels: orthogonal Procrustes, DTW and the composed
//! DTW-aligned, Procrustes-aligned MPJPE.

mod dtw;
mod procrustes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dtw::{dtw, DtwResult};
pub use procrustes::{procrustes_align, AlignmentResult};

use crate::types::{Part, PoseClip};

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("degenerate configuration: all predicted joints coincide")]
    Degenerate,
    #[error("joint count mismatch: pred has {pred}, reference has {reference}")]
    JointCountMismatch { pred: usize, reference: usize },
    #[error("bad frame shape: {0}")]
    BadShape(String),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("singular value decomposition failed")]
    SvdFailed,
    #[error("sequence length must be at least 1")]
    EmptySequence,
    #[error("cost at ({i}, {j}) is {cost}; costs must be finite and non-negative")]
    BadCost { i: usize, j: usize, cost: f64 },
    #[error("clip mismatch: {0}")]
    ClipMismatch(String),
    #[error("frame pair ({pred}, {reference}): {source}")]
    Frame {
        pred: usize,
        reference: usize,
        #[source]
        source: Box<AlignError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerPart {
    pub body: f64,
    pub left_hand: f64,
    pub right_hand: f64,
}

impl PerPart {
    pub fn get(&self, part: Part) -> f64 {
        match part {
            Part::Body => self.body,
            Part::LeftHand => self.left_hand,
            Part::RightHand => self.right_hand,
        }
    }

    fn from_array(v: [f64; 3]) -> Self {
        Self { body: v[0], left_hand: v[1], right_hand: v[2] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: f64,
    pub per_part: PerPart,
}

impl MetricReport {
    /// Element-wise mean of several reports.
    pub fn mean<'a>(reports: impl IntoIterator<Item = &'a MetricReport>) -> Option<MetricReport> {
        let mut n = 0usize;
        let mut acc = [0.0; 4];
        for r in reports {
            n += 1;
            acc[0] += r.overall;
            for part in Part::ALL {
                acc[1 + part.index()] += r.per_part.get(part);
            }
        }
        (n > 0).then(|| {
            let n = n as f64;
            MetricReport {
                overall: acc[0] / n,
                per_part: PerPart::from_array([acc[1] / n, acc[2] / n, acc[3] / n]),
            }
        })
    }
}

/// DTW-PA-MPJPE between a predicted and a reference clip.
///
/// Every candidate frame pair is aligned independently with
/// [`procrustes_align`] over all joints; the residual is the DTW local cost.
/// Per-part values reuse the optimal path and the same per-pair transforms.
pub fn dtw_pa_mpjpe(pred: &PoseClip, reference: &PoseClip, allow_scale: bool) -> Result<MetricReport, AlignError> {
    if pred.layout != reference.layout || pred.dims != reference.dims {
        return Err(AlignError::ClipMismatch(format!(
            "pred `{}` and reference `{}` differ in layout or dims",
            pred.id, reference.id
        )));
    }
    let (n, m) = (pred.frames.len(), reference.frames.len());
    if n == 0 || m == 0 {
        return Err(AlignError::EmptySequence);
    }
    let dims = pred.dims;

    let mut aligned = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let r = procrustes_align(&pred.frames[i], &reference.frames[j], dims, allow_scale).map_err(|e| {
                AlignError::Frame { pred: i, reference: j, source: Box::new(e) }
            })?;
            aligned.push(r);
        }
    }
    let result = dtw(n, m, |i, j| aligned[i * m + j].residual_mpjpe)?;

    let layout = pred.layout;
    let mut sums = [0.0; 3];
    for &(i, j) in &result.path {
        let dists = aligned[i * m + j].joint_distances(&pred.frames[i], &reference.frames[j]);
        for part in Part::ALL {
            let range = layout.joint_range(part);
            let len = range.len() as f64;
            sums[part.index()] += dists[range].iter().sum::<f64>() / len;
        }
    }
    let steps = result.path.len() as f64;
    Ok(MetricReport {
        overall: result.normalized_cost,
        per_part: PerPart::from_array(sums.map(|s| s / steps)),
    })
}
