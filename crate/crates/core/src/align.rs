//! SfM distances: compare re-estimated camera trajectories against target
//! trajectories after resolving the gauge (first-frame relativization) and
//! the scale (closed-form least squares).

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{relative_pose, rotation_angle, GeometryError, Pose, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("all predicted positions are zero; scale is undetermined")]
    DegenerateScale,
    #[error("reference positions have zero norm after relativization")]
    DegenerateReference,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, AlignError>;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AlignmentReport {
    /// `‖s·p̂ − p‖₂ / ‖p‖₂` over the stacked camera centers.
    pub sfmd_pos: f64,
    /// Mean geodesic rotation error over the non-anchor frames, radians.
    pub sfmd_rot: f64,
    pub fitted_scale: f64,
    pub n_frames: usize,
}

/// Re-expresses every pose relative to the pose of frame `anchor`.
pub fn relativize(traj: &Trajectory, anchor: usize) -> Result<Trajectory> {
    if traj.is_empty() {
        return Err(AlignError::InvalidInput("empty trajectory".into()));
    }
    let reference: Pose = traj
        .frames()
        .get(anchor)
        .ok_or_else(|| AlignError::InvalidInput(format!("anchor {anchor} out of range for {} frames", traj.len())))?
        .pose;
    Ok(traj.map_poses(|p| relative_pose(&reference, p))?)
}

/// Closed-form minimizer of `Σ‖s·predᵢ − refᵢ‖²`.
pub fn fit_scale(pred: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<f64> {
    if pred.len() != reference.len() || pred.is_empty() {
        return Err(AlignError::InvalidInput(format!(
            "position lists must be equal and nonempty ({} vs {})",
            pred.len(),
            reference.len()
        )));
    }
    let (num, den) = pred
        .iter()
        .zip(reference)
        .fold((0.0, 0.0), |(n, d), (p, r)| (n + p.dot(r), d + p.norm_squared()));
    if !(den > 0.0) {
        return Err(AlignError::DegenerateScale);
    }
    Ok(num / den)
}

/// Position and rotation error of `pred` against `reference`, both relativized to `anchor`.
pub fn sfm_distances(pred: &Trajectory, reference: &Trajectory, anchor: usize) -> Result<AlignmentReport> {
    if pred.len() != reference.len() {
        return Err(AlignError::InvalidInput(format!(
            "trajectory length mismatch ({} vs {})",
            pred.len(),
            reference.len()
        )));
    }
    let pred = relativize(pred, anchor)?;
    let reference = relativize(reference, anchor)?;

    let p_hat = pred.centers();
    let p = reference.centers();
    let ref_norm = p.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    if !(ref_norm > 0.0) {
        return Err(AlignError::DegenerateReference);
    }
    let s = fit_scale(&p_hat, &p)?;
    let residual = p_hat
        .iter()
        .zip(&p)
        .map(|(a, b)| (s * a - b).norm_squared())
        .sum::<f64>()
        .sqrt();

    let mut rot_sum = 0.0;
    let mut rot_count = 0usize;
    for (i, (a, b)) in pred.frames().iter().zip(reference.frames()).enumerate() {
        if i == anchor {
            continue;
        }
        rot_sum += rotation_angle(&a.pose.camera_to_parent(), &b.pose.camera_to_parent())?;
        rot_count += 1;
    }
    let sfmd_rot = if rot_count == 0 { 0.0 } else { rot_sum / rot_count as f64 };

    Ok(AlignmentReport { sfmd_pos: residual / ref_norm, sfmd_rot, fitted_scale: s, n_frames: pred.len() })
}
