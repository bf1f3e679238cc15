//! Geometry, 3D-consistency and pose metrics, metric-scale calibration and
//! multi-guidance diffusion sampling for posed multi-view generation.
//!
//! Shared types are re-exported at the crate root.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod calibrate;
pub mod diffusion;
pub mod epipolar;
pub mod geometry;
pub mod imgmetrics;
pub mod ingest;

pub use align::{sfm_distances, AlignmentReport};
pub use calibrate::{DepthMap, FrameOutcome, SceneCalibration, SparsePoint};
pub use epipolar::{Correspondence, MatchSet, TsedConfig, TsedReport};
pub use geometry::{Convention, Frame, FrameRole, Intrinsics, Pose, RayMap, Trajectory};
pub use imgmetrics::{Image, SsimConfig};
pub use ingest::colmap::ColmapModel;
pub use ingest::mixture::{DatasetDescriptor, DatasetKind};
