//! Rigid-body pose algebra, pinhole projection and per-pixel ray maps.
//!
//! Poses carry their convention explicitly. Internally everything is
//! normalised to camera-from-world (the COLMAP convention) and converted
//! back on the way out, so an operation returns poses in the convention of
//! its inputs.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector2, Vector3};
use thiserror::Error;

/// Orthonormality tolerance on `‖RᵀR − I‖∞`.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Which way a pose maps points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Convention {
    /// Maps camera coordinates to world coordinates; the translation is the camera center.
    WorldFromCamera,
    /// Maps world coordinates to camera coordinates (COLMAP `images.txt`).
    CameraFromWorld,
}

/// A rigid transform with a declared convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    convention: Convention,
}

fn orthonormal_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::InvalidInput("rotation has non-finite entries".into()));
    }
    let err = orthonormal_error(r);
    if err >= ORTHONORMAL_TOL {
        return Err(GeometryError::InvalidInput(format!(
            "rotation is not orthonormal (‖RᵀR − I‖∞ = {err:e})"
        )));
    }
    if r.determinant() <= 0.0 {
        return Err(GeometryError::InvalidInput("rotation has negative determinant".into()));
    }
    Ok(())
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, convention: Convention) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidInput("translation has non-finite entries".into()));
        }
        Ok(Self { rotation, translation, convention })
    }

    pub fn identity(convention: Convention) -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros(), convention }
    }

    /// Builds a pose from a Hamilton quaternion given as `[w, x, y, z]`.
    /// The quaternion must already be unit length to within the orthonormality tolerance.
    pub fn from_quaternion(wxyz: [f64; 4], translation: Vector3<f64>, convention: Convention) -> Result<Self> {
        let q = nalgebra::Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GeometryError::InvalidInput("degenerate quaternion".into()));
        }
        let rot = UnitQuaternion::new_unchecked(q).to_rotation_matrix().into_inner();
        Self::new(rot, translation, convention)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Hamilton quaternion `[w, x, y, z]` of the stored rotation, with `w ≥ 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        let q = q.into_inner();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    /// Position of the camera center in the pose's parent frame.
    pub fn center(&self) -> Vector3<f64> {
        match self.convention {
            Convention::WorldFromCamera => self.translation,
            Convention::CameraFromWorld => -(self.rotation.transpose() * self.translation),
        }
    }

    /// Camera-to-parent rotation, whatever the stored convention.
    pub fn camera_to_parent(&self) -> Matrix3<f64> {
        match self.convention {
            Convention::WorldFromCamera => self.rotation,
            Convention::CameraFromWorld => self.rotation.transpose(),
        }
    }

    /// The inverse transform, keeping the declared convention label.
    ///
    /// The label is not flipped: `inverse` of a camera pose is not a camera
    /// pose, it is the transform that undoes it.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation), convention: self.convention }
    }

    /// The same physical camera expressed in the other convention.
    pub fn to_convention(&self, convention: Convention) -> Self {
        if convention == self.convention {
            return *self;
        }
        let inv = self.inverse();
        Self { convention, ..inv }
    }

    fn to_camera_from_world(self) -> (Matrix3<f64>, Vector3<f64>) {
        let p = self.to_convention(Convention::CameraFromWorld);
        (p.rotation, p.translation)
    }

    /// Maps a point from the parent frame into camera coordinates.
    pub fn parent_to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        let (r, t) = self.to_camera_from_world();
        r * point + t
    }

    /// Maps a point from camera coordinates into the parent frame.
    pub fn camera_to_parent_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        let (r, t) = self.to_camera_from_world();
        r.transpose() * (point - t)
    }

    /// Approximate equality on rotation and translation entries.
    pub fn approx_eq(&self, other: &Pose, tol: f64) -> bool {
        self.convention == other.convention
            && (self.rotation - other.rotation).amax() <= tol
            && (self.translation - other.translation).amax() <= tol
    }

    /// Applies a similarity transform `x ↦ scale·R·x + t` to the parent (world) frame.
    pub fn with_world_similarity(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>, scale: f64) -> Result<Self> {
        check_rotation(rotation)?;
        if !(scale > 0.0) {
            return Err(GeometryError::InvalidInput("similarity scale must be positive".into()));
        }
        let r_wc = self.camera_to_parent();
        let c = self.center();
        let wfc = Pose {
            rotation: rotation * r_wc,
            translation: scale * (rotation * c) + translation,
            convention: Convention::WorldFromCamera,
        };
        Ok(wfc.to_convention(self.convention))
    }

    /// Multiplies the translation by `s`, scaling camera centers about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        Self { translation: self.translation * s, ..*self }
    }
}

fn require_same_convention(a: &Pose, b: &Pose) -> Result<()> {
    if a.convention != b.convention {
        return Err(GeometryError::InvalidInput(format!(
            "pose convention mismatch: {:?} vs {:?}",
            a.convention, b.convention
        )));
    }
    Ok(())
}

/// Lifts `child`, expressed in the frame of `parent`, into `parent`'s own parent frame.
///
/// `compose(P, relative_pose(P, Q)) == Q` for poses sharing a convention.
pub fn compose(parent: &Pose, child: &Pose) -> Result<Pose> {
    require_same_convention(parent, child)?;
    let (rotation, translation) = match parent.convention {
        // T_wa · T_ab
        Convention::WorldFromCamera => (
            parent.rotation * child.rotation,
            parent.rotation * child.translation + parent.translation,
        ),
        // T_ba · T_aw
        Convention::CameraFromWorld => (
            child.rotation * parent.rotation,
            child.rotation * parent.translation + child.translation,
        ),
    };
    Ok(Pose { rotation, translation, convention: parent.convention })
}

/// Expresses `other` in the coordinate frame of the `reference` camera.
pub fn relative_pose(reference: &Pose, other: &Pose) -> Result<Pose> {
    require_same_convention(reference, other)?;
    let (rotation, translation) = match reference.convention {
        Convention::WorldFromCamera => {
            let rt = reference.rotation.transpose();
            (rt * other.rotation, rt * (other.translation - reference.translation))
        }
        Convention::CameraFromWorld => {
            // T_ow · T_wr where T_wr = T_rw⁻¹
            let rt = reference.rotation.transpose();
            let r = other.rotation * rt;
            (r, other.translation - r * reference.translation)
        }
    };
    Ok(Pose { rotation, translation, convention: reference.convention })
}

/// Pinhole intrinsics in pixels. Pixel `(u, v)` covers `[u, u+1) × [v, v+1)`;
/// its center sits at `(u + 0.5, v + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidInput(format!("degenerate intrinsics {self:?}")))
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Same field of view at `1/factor` the resolution.
    pub fn downscaled(&self, factor: u32) -> Result<Self> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(GeometryError::InvalidInput(format!("cannot downscale {}x{} by {factor}", self.width, self.height)));
        }
        let f = factor as f64;
        Self::new(self.fx / f, self.fy / f, self.cx / f, self.cy / f, self.width / factor, self.height / factor)
    }
}

/// Frame role inside a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FrameRole {
    Conditioning,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub timestamp: f64,
    pub role: FrameRole,
}

/// Ordered frames of one scene, all in a single pose convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frames: Vec<Frame>,
}

impl Trajectory {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| GeometryError::InvalidInput("trajectory must not be empty".into()))?;
        let conv = first.pose.convention();
        if frames.iter().any(|f| f.pose.convention() != conv) {
            return Err(GeometryError::InvalidInput("trajectory mixes pose conventions".into()));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn convention(&self) -> Convention {
        self.frames[0].pose.convention()
    }

    pub fn first_conditioning(&self) -> Option<usize> {
        self.frames.iter().position(|f| f.role == FrameRole::Conditioning)
    }

    /// Camera centers in the trajectory's world frame.
    pub fn centers(&self) -> Vec<Vector3<f64>> {
        self.frames.iter().map(|f| f.pose.center()).collect()
    }

    pub fn map_poses(&self, mut f: impl FnMut(&Pose) -> Result<Pose>) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|fr| Ok(Frame { pose: f(&fr.pose)?, ..fr.clone() }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames)
    }
}

/// Per-pixel ray origins and unit directions, row-major `H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayMap {
    pub width: u32,
    pub height: u32,
    pub origins: Vec<Vector3<f64>>,
    pub directions: Vec<Vector3<f64>>,
}

impl RayMap {
    pub fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    pub fn origin(&self, u: u32, v: u32) -> Vector3<f64> {
        self.origins[self.index(u, v)]
    }

    pub fn direction(&self, u: u32, v: u32) -> Vector3<f64> {
        self.directions[self.index(u, v)]
    }
}

/// Ray through a continuous image coordinate, in the frame of `reference`.
pub fn ray_through(
    intrinsics: &Intrinsics,
    pose: &Pose,
    reference: &Pose,
    pixel: Vector2<f64>,
) -> Result<(Vector3<f64>, Unit<Vector3<f64>>)> {
    intrinsics.validate()?;
    let rel = relative_pose(reference, pose)?;
    let cam_dir = intrinsics.inverse_matrix() * Vector3::new(pixel.x, pixel.y, 1.0);
    Ok((rel.center(), Unit::new_normalize(rel.camera_to_parent() * cam_dir)))
}

/// Ray map for every pixel center of a camera, expressed relative to `reference`.
pub fn pixel_rays(intrinsics: &Intrinsics, pose: &Pose, reference: &Pose) -> Result<RayMap> {
    intrinsics.validate()?;
    let rel = relative_pose(reference, pose)?;
    let origin = rel.center();
    let to_parent = rel.camera_to_parent();
    let kinv = intrinsics.inverse_matrix();
    let n = intrinsics.width as usize * intrinsics.height as usize;
    let mut directions = Vec::with_capacity(n);
    for v in 0..intrinsics.height {
        for u in 0..intrinsics.width {
            let d = kinv * Vector3::new(u as f64 + 0.5, v as f64 + 0.5, 1.0);
            directions.push((to_parent * d).normalize());
        }
    }
    Ok(RayMap { width: intrinsics.width, height: intrinsics.height, origins: vec![origin; n], directions })
}

/// Projects a point from the pose's parent frame to continuous pixel coordinates.
pub fn project(point: &Vector3<f64>, intrinsics: &Intrinsics, pose: &Pose) -> Result<(Vector2<f64>, f64)> {
    let pc = pose.parent_to_camera(point);
    let depth = pc.z;
    if !(depth > 0.0) {
        return Err(GeometryError::BehindCamera { depth });
    }
    let px = Vector2::new(intrinsics.fx * pc.x / depth + intrinsics.cx, intrinsics.fy * pc.y / depth + intrinsics.cy);
    Ok((px, depth))
}

/// Inverse of [`project`]: lifts a pixel at camera-frame depth back to the parent frame.
pub fn backproject(pixel: &Vector2<f64>, depth: f64, intrinsics: &Intrinsics, pose: &Pose) -> Vector3<f64> {
    let pc = Vector3::new(
        (pixel.x - intrinsics.cx) / intrinsics.fx * depth,
        (pixel.y - intrinsics.cy) / intrinsics.fy * depth,
        depth,
    );
    pose.camera_to_parent_point(&pc)
}

/// Geodesic angle between two rotations, in `[0, π]`.
pub fn rotation_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Result<f64> {
    check_rotation(a)?;
    check_rotation(b)?;
    let r = a.transpose() * b;
    // atan2 form stays accurate near 0 and π where arccos loses digits.
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin = 0.5
        * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    Ok(sin.atan2(cos).clamp(0.0, std::f64::consts::PI))
}

/// Rotation matrix for `angle` radians about `axis`.
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).into_inner()
}
