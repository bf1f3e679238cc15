//! Metric-scale calibration of SfM-posed scenes from monocular metric depth.
//!
//! Each frame regresses SfM camera-frame depths `z` onto metric depths `d`
//! under an L1 loss. The 1-D problem `min_s Σ|s·z − d|` is solved exactly as
//! the z-weighted median of the ratios `d/z`. Frames are pooled into a scene
//! estimate (mean, population variance) and the least consistent scenes are
//! filtered out by variance.

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{project, GeometryError, Intrinsics, Pose, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrateError {
    #[error("no sparse point lies in front of the camera")]
    NoVisiblePoints,
    #[error("scene has no frame with enough depth samples")]
    UncalibratableScene,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, CalibrateError>;

/// Default minimum number of valid depth samples per frame.
pub const DEFAULT_MIN_POINTS: usize = 5;
/// Default fraction of highest-variance scenes to discard.
pub const DEFAULT_DISCARD_FRACTION: f64 = 0.30;

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePoint {
    pub xyz: Vector3<f64>,
    /// Frames observing the point.
    pub track: Vec<usize>,
}

/// Metric depth in meters with a validity mask, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a map from raw values; non-finite and non-positive entries are masked out.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(CalibrateError::InvalidInput(format!(
                "depth map {width}x{height} with {} values",
                values.len()
            )));
        }
        let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Ok(Self { width, height, values, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    /// Depth at an integer pixel, or `None` when out of bounds or masked.
    pub fn at(&self, u: usize, v: usize) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let i = v * self.width + u;
        self.valid[i].then_some(self.values[i])
    }

    /// Depth at the pixel containing the continuous coordinate `(x, y)`.
    pub fn nearest(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        self.at(x.floor() as usize, y.floor() as usize)
    }
}

/// One `(SfM depth, metric depth)` sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSample {
    pub sfm_depth: f64,
    pub metric_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FrameScale {
    pub scale: f64,
    /// Number of depth samples that entered the regression.
    pub inliers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameOutcome {
    Scale(FrameScale),
    Insufficient { samples: usize },
}

/// Exact minimizer of `Σᵢ |s·zᵢ − dᵢ|` over `s`, with all `zᵢ > 0`.
///
/// Sorts ratios `dᵢ/zᵢ`, accumulates weights `zᵢ`, and returns the first
/// ratio whose cumulative weight reaches half the total.
pub fn weighted_median_scale(samples: &[DepthSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(CalibrateError::InvalidInput("no depth samples".into()));
    }
    if samples.iter().any(|s| !(s.sfm_depth > 0.0 && s.metric_depth.is_finite())) {
        return Err(CalibrateError::InvalidInput("samples need positive SfM depth and finite metric depth".into()));
    }
    let mut pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.metric_depth / s.sfm_depth, s.sfm_depth)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let half = 0.5 * total;
    let mut acc = 0.0;
    for (ratio, w) in &pairs {
        acc += w;
        if acc >= half {
            return Ok(*ratio);
        }
    }
    Ok(pairs[pairs.len() - 1].0)
}

/// The L1 objective `Σ|s·z − d|`.
pub fn l1_objective(samples: &[DepthSample], s: f64) -> f64 {
    samples.iter().map(|x| (s * x.sfm_depth - x.metric_depth).abs()).sum()
}

/// Projects `points` into a frame and pairs their SfM depth with the metric
/// depth at the nearest pixel.
pub fn collect_samples(
    points: &[SparsePoint],
    depth: &DepthMap,
    intrinsics: &Intrinsics,
    pose: &Pose,
) -> Result<Vec<DepthSample>> {
    let mut samples = Vec::new();
    let mut in_front = 0usize;
    for p in points {
        let (px, z) = match project(&p.xyz, intrinsics, pose) {
            Ok(r) => r,
            Err(GeometryError::BehindCamera { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        in_front += 1;
        if let Some(d) = depth.nearest(px.x, px.y) {
            samples.push(DepthSample { sfm_depth: z, metric_depth: d });
        }
    }
    if in_front == 0 {
        return Err(CalibrateError::NoVisiblePoints);
    }
    Ok(samples)
}

/// Per-frame L1 scale from the points visible in that frame.
pub fn frame_scale(
    points: &[SparsePoint],
    depth: &DepthMap,
    intrinsics: &Intrinsics,
    pose: &Pose,
    min_points: usize,
) -> Result<FrameOutcome> {
    let samples = collect_samples(points, depth, intrinsics, pose)?;
    if samples.len() < min_points.max(1) {
        return Ok(FrameOutcome::Insufficient { samples: samples.len() });
    }
    let scale = weighted_median_scale(&samples)?;
    Ok(FrameOutcome::Scale(FrameScale { scale, inliers: samples.len() }))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SceneCalibration {
    pub per_frame_scales: Vec<FrameScale>,
    pub mean_scale: f64,
    /// Population variance of the per-frame scales.
    pub variance: f64,
}

pub fn scene_scale(frames: &[FrameOutcome]) -> Result<SceneCalibration> {
    let per_frame_scales: Vec<FrameScale> = frames
        .iter()
        .filter_map(|f| match f {
            FrameOutcome::Scale(s) => Some(*s),
            FrameOutcome::Insufficient { .. } => None,
        })
        .collect();
    if per_frame_scales.is_empty() {
        return Err(CalibrateError::UncalibratableScene);
    }
    let n = per_frame_scales.len() as f64;
    let mean_scale = per_frame_scales.iter().map(|f| f.scale).sum::<f64>() / n;
    let variance = per_frame_scales.iter().map(|f| (f.scale - mean_scale).powi(2)).sum::<f64>() / n;
    if !(mean_scale > 0.0) {
        return Err(CalibrateError::UncalibratableScene);
    }
    Ok(SceneCalibration { per_frame_scales, mean_scale, variance })
}

/// Number of scenes removed from `n` at `fraction`: `⌈fraction·n⌉`.
pub fn discard_count(n: usize, fraction: f64) -> usize {
    // Absorb representation error so that e.g. 0.3·10 counts as exactly 3.
    let raw = fraction * n as f64;
    let k = (raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize;
    k.min(n)
}

/// Indices (ascending) of scenes kept after discarding the `⌈fraction·N⌉`
/// highest-variance ones. Among equal variances later scenes go first.
pub fn filter_scenes(variances: &[f64], discard_fraction: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(CalibrateError::InvalidInput(format!("discard fraction {discard_fraction} not in [0, 1)")));
    }
    let k = discard_count(variances.len(), discard_fraction);
    let mut order: Vec<usize> = (0..variances.len()).collect();
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(b.cmp(&a)));
    let mut kept: Vec<usize> = order[k..].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// Multiplies every translation and point coordinate by `s`.
pub fn apply_scale(traj: &Trajectory, points: &[SparsePoint], s: f64) -> Result<(Trajectory, Vec<SparsePoint>)> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(CalibrateError::InvalidInput(format!("scale must be positive, got {s}")));
    }
    let traj = traj.map_poses(|p| Ok(p.scaled(s)))?;
    let points = points.iter().map(|p| SparsePoint { xyz: p.xyz * s, track: p.track.clone() }).collect();
    Ok((traj, points))
}
