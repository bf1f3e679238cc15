//! COLMAP sparse text models (`cameras.txt`, `images.txt`, `points3D.txt`).
//!
//! Poses are stored as COLMAP writes them: camera-from-world, Hamilton
//! quaternion in `QW QX QY QZ` order. Only pinhole camera models are read.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{format_g17, read_text, write_text, IngestError, Result};
use crate::calibrate::SparsePoint;
use crate::geometry::{Convention, Frame, FrameRole, Intrinsics, Pose, Trajectory};

/// Quaternions further than this from unit norm are rejected rather than repaired.
pub const QUATERNION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
}

impl CameraModel {
    pub fn name(self) -> &'static str {
        match self {
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
            CameraModel::Pinhole => "PINHOLE",
        }
    }

    fn param_count(self) -> usize {
        match self {
            CameraModel::SimplePinhole => 3,
            CameraModel::Pinhole => 4,
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        match s {
            "SIMPLE_PINHOLE" => Some(CameraModel::SimplePinhole),
            "PINHOLE" => Some(CameraModel::Pinhole),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub id: u32,
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    pub params: Vec<f64>,
}

impl Camera {
    pub fn intrinsics(&self) -> Intrinsics {
        let p = &self.params;
        let (fx, fy, cx, cy) = match self.model {
            CameraModel::SimplePinhole => (p[0], p[0], p[1], p[2]),
            CameraModel::Pinhole => (p[0], p[1], p[2], p[3]),
        };
        Intrinsics { fx, fy, cx, cy, width: self.width, height: self.height }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
    /// `-1` when the keypoint has no 3D point.
    pub point3d_id: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColmapImage {
    pub id: u32,
    /// `[QW, QX, QY, QZ]`, unit norm.
    pub qvec: [f64; 4],
    pub tvec: Vector3<f64>,
    pub camera_id: u32,
    pub name: String,
    pub points2d: Vec<Point2D>,
}

impl ColmapImage {
    /// Camera-from-world pose.
    pub fn pose(&self) -> Pose {
        Pose::from_quaternion(self.qvec, self.tvec, Convention::CameraFromWorld)
            .expect("quaternion normalized at parse time")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point3D {
    pub id: u64,
    pub xyz: Vector3<f64>,
    pub rgb: [u8; 3],
    pub error: f64,
    /// `(IMAGE_ID, POINT2D_IDX)` pairs.
    pub track: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColmapModel {
    pub cameras: BTreeMap<u32, Camera>,
    pub images: BTreeMap<u32, ColmapImage>,
    pub points: BTreeMap<u64, Point3D>,
}

impl ColmapModel {
    /// Checks cross references: image → camera and point track → image.
    pub fn validate(&self) -> Result<()> {
        for img in self.images.values() {
            if !self.cameras.contains_key(&img.camera_id) {
                return Err(IngestError::Integrity(format!(
                    "image {} references missing camera {}",
                    img.id, img.camera_id
                )));
            }
        }
        for p in self.points.values() {
            if let Some((img, _)) = p.track.iter().find(|(img, _)| !self.images.contains_key(img)) {
                return Err(IngestError::Integrity(format!("point {} references missing image {img}", p.id)));
            }
        }
        Ok(())
    }

    /// Image ids in ascending order; this order defines frame indices.
    pub fn image_ids(&self) -> Vec<u32> {
        self.images.keys().copied().collect()
    }

    /// Trajectory of all images in id order. Frames listed in `conditioning`
    /// are marked as conditioning frames; timestamps are frame indices.
    pub fn trajectory(&self, conditioning: &[usize]) -> Result<Trajectory> {
        let frames = self
            .images
            .values()
            .enumerate()
            .map(|(i, img)| {
                let cam = self
                    .cameras
                    .get(&img.camera_id)
                    .ok_or_else(|| IngestError::Integrity(format!("image {} has no camera", img.id)))?;
                Ok(Frame {
                    pose: img.pose(),
                    intrinsics: cam.intrinsics(),
                    timestamp: i as f64,
                    role: if conditioning.contains(&i) { FrameRole::Conditioning } else { FrameRole::Target },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(frames).map_err(|e| IngestError::InvalidInput(e.to_string()))
    }

    /// Sparse points whose track includes `image_id`, with tracks as frame indices.
    pub fn points_seen_by(&self, image_id: u32) -> Vec<SparsePoint> {
        let index: BTreeMap<u32, usize> = self.images.keys().enumerate().map(|(i, id)| (*id, i)).collect();
        self.points
            .values()
            .filter(|p| p.track.iter().any(|(img, _)| *img == image_id))
            .map(|p| {
                let mut track: Vec<usize> = p.track.iter().filter_map(|(img, _)| index.get(img).copied()).collect();
                track.dedup();
                SparsePoint { xyz: p.xyz, track }
            })
            .collect()
    }

    /// Copy with translations and point coordinates multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for img in out.images.values_mut() {
            img.tvec *= s;
        }
        for p in out.points.values_mut() {
            p.xyz *= s;
        }
        out
    }
}

/// Non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| IngestError::parse(path, line, format!("missing {what}")))?;
    tok.parse::<T>()
        .map_err(|_| IngestError::parse(path, line, format!("cannot parse {what} from {tok:?}")))
}

fn finite(path: &Path, line: usize, v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(IngestError::parse(path, line, format!("non-finite {what}")))
    }
}

pub fn parse_cameras(path: &Path) -> Result<BTreeMap<u32, Camera>> {
    let text = read_text(path)?;
    let mut cameras = BTreeMap::new();
    for (ln, line) in data_lines(&text) {
        let mut tok = line.split_whitespace();
        let id: u32 = field(path, ln, tok.next(), "CAMERA_ID")?;
        let model_name = tok.next().ok_or_else(|| IngestError::parse(path, ln, "missing MODEL"))?;
        let model = CameraModel::from_name(model_name).ok_or_else(|| IngestError::UnsupportedCamera {
            path: path.to_path_buf(),
            line: ln,
            model: model_name.to_string(),
        })?;
        let width: u32 = field(path, ln, tok.next(), "WIDTH")?;
        let height: u32 = field(path, ln, tok.next(), "HEIGHT")?;
        let params = tok
            .map(|t| field::<f64>(path, ln, Some(t), "parameter").and_then(|v| finite(path, ln, v, "parameter")))
            .collect::<Result<Vec<_>>>()?;
        if params.len() != model.param_count() {
            return Err(IngestError::parse(
                path,
                ln,
                format!("{} takes {} parameters, got {}", model.name(), model.param_count(), params.len()),
            ));
        }
        let cam = Camera { id, model, width, height, params };
        cam.intrinsics()
            .validate()
            .map_err(|e| IngestError::parse(path, ln, e.to_string()))?;
        if cameras.insert(id, cam).is_some() {
            return Err(IngestError::parse(path, ln, format!("duplicate camera id {id}")));
        }
    }
    Ok(cameras)
}

fn normalize_quaternion(path: &Path, line: usize, q: [f64; 4]) -> Result<[f64; 4]> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() < QUATERNION_TOLERANCE) {
        return Err(IngestError::parse(path, line, format!("quaternion norm {norm} is not close to 1")));
    }
    if (norm - 1.0).abs() <= 1e-12 {
        return Ok(q);
    }
    Ok(q.map(|v| v / norm))
}

pub fn parse_images(path: &Path) -> Result<BTreeMap<u32, ColmapImage>> {
    let text = read_text(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut images = BTreeMap::new();
    let mut i = 0;
    while i < lines.len() {
        let ln = i + 1;
        let line = lines[i].trim();
        i += 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        let id: u32 = field(path, ln, tok.next(), "IMAGE_ID")?;
        let mut q = [0.0; 4];
        for (k, name) in ["QW", "QX", "QY", "QZ"].iter().enumerate() {
            q[k] = finite(path, ln, field(path, ln, tok.next(), name)?, name)?;
        }
        let mut t = Vector3::zeros();
        for (k, name) in ["TX", "TY", "TZ"].iter().enumerate() {
            t[k] = finite(path, ln, field(path, ln, tok.next(), name)?, name)?;
        }
        let camera_id: u32 = field(path, ln, tok.next(), "CAMERA_ID")?;
        let name = tok.collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(IngestError::parse(path, ln, "missing NAME"));
        }
        let qvec = normalize_quaternion(path, ln, q)?;

        // The observation line always follows the image line, possibly empty.
        let obs_ln = i + 1;
        let obs_line = lines.get(i).copied().unwrap_or("");
        i += 1;
        let toks: Vec<&str> = obs_line.split_whitespace().collect();
        if !toks.len().is_multiple_of(3) {
            return Err(IngestError::parse(path, obs_ln, "POINTS2D must come in (X, Y, POINT3D_ID) triples"));
        }
        let points2d = toks
            .chunks(3)
            .map(|c| {
                Ok(Point2D {
                    x: finite(path, obs_ln, field(path, obs_ln, Some(c[0]), "X")?, "X")?,
                    y: finite(path, obs_ln, field(path, obs_ln, Some(c[1]), "Y")?, "Y")?,
                    point3d_id: field(path, obs_ln, Some(c[2]), "POINT3D_ID")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let img = ColmapImage { id, qvec, tvec: t, camera_id, name, points2d };
        if images.insert(id, img).is_some() {
            return Err(IngestError::parse(path, ln, format!("duplicate image id {id}")));
        }
    }
    Ok(images)
}

pub fn parse_points3d(path: &Path) -> Result<BTreeMap<u64, Point3D>> {
    let text = read_text(path)?;
    let mut points = BTreeMap::new();
    for (ln, line) in data_lines(&text) {
        let mut tok = line.split_whitespace();
        let id: u64 = field(path, ln, tok.next(), "POINT3D_ID")?;
        let mut xyz = Vector3::zeros();
        for (k, name) in ["X", "Y", "Z"].iter().enumerate() {
            xyz[k] = finite(path, ln, field(path, ln, tok.next(), name)?, name)?;
        }
        let rgb = [
            field(path, ln, tok.next(), "R")?,
            field(path, ln, tok.next(), "G")?,
            field(path, ln, tok.next(), "B")?,
        ];
        let error = finite(path, ln, field(path, ln, tok.next(), "ERROR")?, "ERROR")?;
        let rest: Vec<&str> = tok.collect();
        if !rest.len().is_multiple_of(2) {
            return Err(IngestError::parse(path, ln, "TRACK must come in (IMAGE_ID, POINT2D_IDX) pairs"));
        }
        let track = rest
            .chunks(2)
            .map(|c| Ok((field(path, ln, Some(c[0]), "IMAGE_ID")?, field(path, ln, Some(c[1]), "POINT2D_IDX")?)))
            .collect::<Result<Vec<_>>>()?;
        if points.insert(id, Point3D { id, xyz, rgb, error, track }).is_some() {
            return Err(IngestError::parse(path, ln, format!("duplicate point id {id}")));
        }
    }
    Ok(points)
}

/// Reads a text model directory and checks its cross references.
pub fn parse_colmap(dir: &Path) -> Result<ColmapModel> {
    let model = ColmapModel {
        cameras: parse_cameras(&dir.join("cameras.txt"))?,
        images: parse_images(&dir.join("images.txt"))?,
        points: parse_points3d(&dir.join("points3D.txt"))?,
    };
    model.validate()?;
    Ok(model)
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(IngestError::InvalidInput(format!("non-finite value in {what}")))
    }
}

pub fn cameras_text(model: &ColmapModel) -> Result<String> {
    let mut s = String::new();
    s.push_str("# Camera list with one line of data per camera:\n");
    s.push_str("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    let _ = writeln!(s, "# Number of cameras: {}", model.cameras.len());
    for c in model.cameras.values() {
        check_finite(&c.params, "camera parameters")?;
        let _ = write!(s, "{} {} {} {}", c.id, c.model.name(), c.width, c.height);
        for p in &c.params {
            let _ = write!(s, " {}", format_g17(*p));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn images_text(model: &ColmapModel) -> Result<String> {
    let mut s = String::new();
    s.push_str("# Image list with two lines of data per image:\n");
    s.push_str("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n");
    s.push_str("#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    let _ = writeln!(s, "# Number of images: {}", model.images.len());
    for img in model.images.values() {
        check_finite(&img.qvec, "quaternion")?;
        check_finite(img.tvec.as_slice(), "translation")?;
        let _ = write!(s, "{}", img.id);
        for v in img.qvec.iter().chain(img.tvec.iter()) {
            let _ = write!(s, " {}", format_g17(*v));
        }
        let _ = writeln!(s, " {} {}", img.camera_id, img.name);
        let obs: Vec<String> = img
            .points2d
            .iter()
            .map(|p| {
                check_finite(&[p.x, p.y], "2D point")?;
                Ok(format!("{} {} {}", format_g17(p.x), format_g17(p.y), p.point3d_id))
            })
            .collect::<Result<_>>()?;
        s.push_str(&obs.join(" "));
        s.push('\n');
    }
    Ok(s)
}

pub fn points3d_text(model: &ColmapModel) -> Result<String> {
    let mut s = String::new();
    s.push_str("# 3D point list with one line of data per point:\n");
    s.push_str("#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
    let _ = writeln!(s, "# Number of points: {}", model.points.len());
    for p in model.points.values() {
        check_finite(p.xyz.as_slice(), "point coordinates")?;
        check_finite(&[p.error], "point error")?;
        let _ = write!(
            s,
            "{} {} {} {} {} {} {} {}",
            p.id,
            format_g17(p.xyz.x),
            format_g17(p.xyz.y),
            format_g17(p.xyz.z),
            p.rgb[0],
            p.rgb[1],
            p.rgb[2],
            format_g17(p.error)
        );
        for (img, idx) in &p.track {
            let _ = write!(s, " {img} {idx}");
        }
        s.push('\n');
    }
    Ok(s)
}

/// Writes the three text files into `dir`, creating it if needed.
pub fn write_colmap(model: &ColmapModel, dir: &Path) -> Result<()> {
    model.validate()?;
    let cameras = cameras_text(model)?;
    let images = images_text(model)?;
    let points = points3d_text(model)?;
    std::fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    write_text(&dir.join("cameras.txt"), &cameras)?;
    write_text(&dir.join("images.txt"), &images)?;
    write_text(&dir.join("points3D.txt"), &points)?;
    Ok(())
}
