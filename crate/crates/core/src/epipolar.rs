//! Symmetric epipolar distance (SED) and thresholded SED (TSED).
//!
//! Fundamental matrices always come from known poses; nothing here estimates
//! geometry from correspondences.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{relative_pose, Convention, GeometryError, Intrinsics, Pose, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpipolarError {
    #[error("pair has zero baseline; pure rotation has no epipolar constraint")]
    DegeneratePair,
    #[error("epipolar line is degenerate")]
    DegenerateLine,
    #[error("no image pair has enough matches")]
    NoValidPairs,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, EpipolarError>;

/// Pixel correspondence `(x₁, y₁)` in frame a to `(x₂, y₂)` in frame b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Correspondence {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    fn first(&self) -> Vector3<f64> {
        Vector3::new(self.x1, self.y1, 1.0)
    }

    fn second(&self) -> Vector3<f64> {
        Vector3::new(self.x2, self.y2, 1.0)
    }

    pub fn swapped(&self) -> Self {
        Self { x1: self.x2, y1: self.y2, x2: self.x1, y2: self.y1 }
    }

    /// Keypoint displacement `‖(x₂, y₂) − (x₁, y₁)‖`.
    pub fn displacement(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }
}

/// Correspondences between an ordered image pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub pair: (usize, usize),
    pub matches: Vec<Correspondence>,
}

impl MatchSet {
    pub fn new(pair: (usize, usize), matches: Vec<Correspondence>) -> Result<Self> {
        if pair.0 == pair.1 {
            return Err(EpipolarError::InvalidInput(format!("match set pairs frame {} with itself", pair.0)));
        }
        if matches
            .iter()
            .any(|m| !(m.x1.is_finite() && m.y1.is_finite() && m.x2.is_finite() && m.y2.is_finite()))
        {
            return Err(EpipolarError::InvalidInput("non-finite keypoint coordinate".into()));
        }
        Ok(Self { pair, matches })
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TsedConfig {
    /// Median-SED threshold in pixels.
    pub threshold: f64,
    /// Pairs with fewer matches are discarded.
    pub min_matches: usize,
}

impl Default for TsedConfig {
    fn default() -> Self {
        Self { threshold: 2.0, min_matches: 10 }
    }
}

impl TsedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || self.min_matches < 1 {
            return Err(EpipolarError::InvalidInput(format!("bad TSED config {self:?}")));
        }
        Ok(())
    }
}

fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// Fundamental matrix with `x_bᵀ F x_a = 0`, from the pose of camera b relative to camera a.
///
/// `rel` is `relative_pose(a, b)` in either convention. The result has unit
/// Frobenius norm.
pub fn fundamental_from_poses(ka: &Intrinsics, kb: &Intrinsics, rel: &Pose) -> Result<Matrix3<f64>> {
    ka.validate()?;
    kb.validate()?;
    // Transform taking camera-a coordinates to camera-b coordinates.
    let b_from_a = rel.to_convention(Convention::CameraFromWorld);
    let (r, t) = (*b_from_a.rotation(), *b_from_a.translation());
    let scale = 1.0 + r.amax();
    if t.norm() <= 1e-12 * scale {
        return Err(EpipolarError::DegeneratePair);
    }
    let e = skew(&t) * r;
    let f = kb.inverse_matrix().transpose() * e * ka.inverse_matrix();
    let n = f.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(EpipolarError::DegeneratePair);
    }
    Ok(f / n)
}

/// Euclidean distance from pixel `p` to the line `l·(x, y, 1) = 0`.
fn point_line_distance(line: &Vector3<f64>, p: &Vector3<f64>) -> Result<f64> {
    let norm = line.x.hypot(line.y);
    if !(norm > 0.0) {
        return Err(EpipolarError::DegenerateLine);
    }
    Ok(line.dot(p).abs() / norm)
}

/// `d(x₂, F x₁) + d(x₁, Fᵀ x₂)` in pixels.
pub fn symmetric_epipolar_distance(f: &Matrix3<f64>, m: &Correspondence) -> Result<f64> {
    let (p1, p2) = (m.first(), m.second());
    let forward = point_line_distance(&(f * p1), &p2)?;
    let backward = point_line_distance(&(f.transpose() * p2), &p1)?;
    Ok(forward + backward)
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median SED of a pair, or a marker that the pair has too few matches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSed {
    Median(f64),
    Insufficient { matches: usize },
}

pub fn pair_sed(f: &Matrix3<f64>, ms: &MatchSet, cfg: &TsedConfig) -> Result<PairSed> {
    if ms.len() < cfg.min_matches || ms.is_empty() {
        return Ok(PairSed::Insufficient { matches: ms.len() });
    }
    let mut d = ms
        .matches
        .iter()
        .map(|m| symmetric_epipolar_distance(f, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(PairSed::Median(median(&mut d)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsedReport {
    /// Fraction of scored pairs whose median SED is below the threshold.
    pub score: f64,
    pub scored_pairs: usize,
    pub discarded_pairs: usize,
    pub pair_results: Vec<PairSed>,
}

/// TSED over the given pairs. Callers pass the contiguous pairs of a trajectory.
pub fn tsed(pairs: &[(Matrix3<f64>, MatchSet)], cfg: &TsedConfig) -> Result<TsedReport> {
    cfg.validate()?;
    let pair_results = pairs
        .iter()
        .map(|(f, ms)| pair_sed(f, ms, cfg))
        .collect::<Result<Vec<_>>>()?;
    summarize(pair_results, cfg)
}

/// TSED over the contiguous frame pairs `(i, i + 1)` of `traj`.
///
/// Match sets are looked up by pair in either orientation; a pair with no
/// match set counts as discarded.
pub fn trajectory_tsed(traj: &Trajectory, sets: &[MatchSet], cfg: &TsedConfig) -> Result<TsedReport> {
    cfg.validate()?;
    let frames = traj.frames();
    let mut results = Vec::with_capacity(frames.len().saturating_sub(1));
    for i in 1..frames.len() {
        let (a, b) = (&frames[i - 1], &frames[i]);
        let ms = match sets.iter().find(|s| s.pair == (i - 1, i) || s.pair == (i, i - 1)) {
            Some(s) if s.pair == (i - 1, i) => s.clone(),
            Some(s) => MatchSet { pair: (i - 1, i), matches: s.matches.iter().map(Correspondence::swapped).collect() },
            None => MatchSet { pair: (i - 1, i), matches: Vec::new() },
        };
        if ms.len() < cfg.min_matches {
            results.push(PairSed::Insufficient { matches: ms.len() });
            continue;
        }
        let rel = relative_pose(&a.pose, &b.pose)?;
        let f = fundamental_from_poses(&a.intrinsics, &b.intrinsics, &rel)?;
        results.push(pair_sed(&f, &ms, cfg)?);
    }
    summarize(results, cfg)
}

/// Aggregates already-computed pair results into a TSED score.
pub fn summarize(pair_results: Vec<PairSed>, cfg: &TsedConfig) -> Result<TsedReport> {
    let medians: Vec<f64> = pair_results
        .iter()
        .filter_map(|r| match r {
            PairSed::Median(m) => Some(*m),
            PairSed::Insufficient { .. } => None,
        })
        .collect();
    if medians.is_empty() {
        return Err(EpipolarError::NoValidPairs);
    }
    let below = medians.iter().filter(|&&m| m < cfg.threshold).count();
    Ok(TsedReport {
        score: below as f64 / medians.len() as f64,
        scored_pairs: medians.len(),
        discarded_pairs: pair_results.len() - medians.len(),
        pair_results,
    })
}
