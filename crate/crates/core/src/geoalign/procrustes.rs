use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::AlignError;

/// Squared centred norm below which every joint is treated as coincident.
const DEGENERATE_EPS: f64 = 1e-24;

/// Similarity transform `x ↦ scale · R · x + t` taking a predicted frame onto a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Row-major `dims × dims` proper rotation.
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
    pub scale: f64,
    pub residual_mpjpe: f64,
}

impl AlignmentResult {
    pub fn dims(&self) -> usize {
        self.translation.len()
    }

    pub fn apply(&self, point: &[f64]) -> Vec<f64> {
        self.rotation
            .iter()
            .zip(&self.translation)
            .map(|(row, t)| self.scale * row.iter().zip(point).map(|(r, p)| r * p).sum::<f64>() + t)
            .collect()
    }

    /// Euclidean distance of every transformed `pred` joint to its `reference` joint.
    pub fn joint_distances(&self, pred: &[f64], reference: &[f64]) -> Vec<f64> {
        let d = self.dims();
        pred.chunks_exact(d)
            .zip(reference.chunks_exact(d))
            .map(|(p, q)| {
                self.apply(p)
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Least-squares rigid (optionally similarity) alignment of `pred` onto `reference`.
///
/// Both frames are flat coordinate lists of `joints × dims`. The rotation
/// comes from the SVD of the centred cross-covariance with the last singular
/// direction flipped when needed so that `det(R) = +1`.
pub fn procrustes_align(
    pred: &[f64],
    reference: &[f64],
    dims: usize,
    allow_scale: bool,
) -> Result<AlignmentResult, AlignError> {
    if dims == 0 || pred.len() % dims != 0 || reference.len() % dims != 0 {
        return Err(AlignError::BadShape(format!(
            "frame lengths {} and {} are not multiples of dims {dims}",
            pred.len(),
            reference.len()
        )));
    }
    let n = pred.len() / dims;
    if n != reference.len() / dims {
        return Err(AlignError::JointCountMismatch { pred: n, reference: reference.len() / dims });
    }
    if n < dims {
        return Err(AlignError::BadShape(format!("{n} joints is fewer than dims {dims}")));
    }
    if pred.iter().chain(reference).any(|x| !x.is_finite()) {
        return Err(AlignError::NonFinite);
    }

    let p = DMatrix::from_row_slice(n, dims, pred);
    let q = DMatrix::from_row_slice(n, dims, reference);
    let mu_p: DVector<f64> = p.row_mean().transpose();
    let mu_q: DVector<f64> = q.row_mean().transpose();
    let mut pc = p.clone();
    let mut qc = q.clone();
    for mut row in pc.row_iter_mut() {
        row -= mu_p.transpose();
    }
    for mut row in qc.row_iter_mut() {
        row -= mu_q.transpose();
    }
    let p_norm2 = pc.norm_squared();
    if p_norm2 <= DEGENERATE_EPS {
        return Err(AlignError::Degenerate);
    }

    let h = pc.transpose() * &qc;
    let svd = h.svd(true, true);
    let u = svd.u.ok_or(AlignError::SvdFailed)?;
    let v_t = svd.v_t.ok_or(AlignError::SvdFailed)?;
    let v = v_t.transpose();
    let mut signs = DVector::from_element(dims, 1.0);
    if (&v * u.transpose()).determinant() < 0.0 {
        signs[dims - 1] = -1.0;
    }
    let rotation = &v * DMatrix::from_diagonal(&signs) * u.transpose();
    let scale = if allow_scale {
        svd.singular_values.iter().zip(signs.iter()).map(|(s, d)| s * d).sum::<f64>() / p_norm2
    } else {
        1.0
    };
    let translation = &mu_q - scale * (&rotation * &mu_p);

    let mut result = AlignmentResult {
        rotation: rotation.row_iter().map(|r| r.iter().copied().collect()).collect(),
        translation: translation.iter().copied().collect(),
        scale,
        residual_mpjpe: 0.0,
    };
    let dists = result.joint_distances(pred, reference);
    result.residual_mpjpe = dists.iter().sum::<f64>() / n as f64;
    Ok(result)
}
