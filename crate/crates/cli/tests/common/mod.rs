#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{Matrix3, Vector3};
use nvs4d_core::calibrate::DepthMap;
use nvs4d_core::epipolar::{Correspondence, MatchSet};
use nvs4d_core::geometry::{axis_angle, project, Convention, Pose};
use nvs4d_core::ingest::colmap::{write_colmap, Camera, CameraModel, ColmapImage, ColmapModel, Point2D, Point3D};
use nvs4d_core::ingest::depth::write_depth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WIDTH: u32 = 128;
pub const HEIGHT: u32 = 96;

pub fn nvs4d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvs4d"))
        .args(args)
        .env_remove("NVS4D_SEED")
        .output()
        .expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Data rows of a schema-versioned CSV as maps from column name to cell.
pub fn read_csv(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema_version=1"));
    let header: Vec<String> = lines.next().expect("header").split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

pub fn num(row: &BTreeMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap_or_else(|_| panic!("{col} = {:?} is not a number", row[col]))
}

/// A metric-scale rig: camera-from-world poses and world points.
pub struct Rig {
    pub poses: Vec<Pose>,
    pub points: Vec<Vector3<f64>>,
    pub camera: Camera,
}

impl Rig {
    pub fn new(rng: &mut ChaCha8Rng, frames: usize, points: usize) -> Self {
        let camera = Camera {
            id: 1,
            model: CameraModel::Pinhole,
            width: WIDTH,
            height: HEIGHT,
            params: vec![100.0, 100.0, 64.0, 48.0],
        };
        let poses = (0..frames)
            .map(|i| {
                let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let r: Matrix3<f64> = axis_angle(&axis, rng.random_range(0.0..0.05));
                let center = Vector3::new(0.15 * i as f64, rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                Pose::new(r, -(r * center), Convention::CameraFromWorld).unwrap()
            })
            .collect();
        let points = (0..points)
            .map(|_| Vector3::new(rng.random_range(-1.2..1.5), rng.random_range(-1.0..1.0), rng.random_range(4.0..8.0)))
            .collect();
        Self { poses, points, camera }
    }

    /// Pixel of point `p` in frame `f`, if it lands inside the image.
    pub fn pixel(&self, f: usize, p: usize, scale: f64) -> Option<(f64, f64, f64)> {
        let pose = self.poses[f].scaled(1.0 / scale);
        let (px, z) = project(&(self.points[p] / scale), &self.camera.intrinsics(), &pose).ok()?;
        let inside = px.x >= 0.0 && px.y >= 0.0 && px.x < WIDTH as f64 && px.y < HEIGHT as f64;
        inside.then_some((px.x, px.y, z))
    }

    /// The rig as a COLMAP model with every length divided by `scale`.
    pub fn model(&self, scale: f64) -> ColmapModel {
        let mut model = ColmapModel::default();
        model.cameras.insert(1, self.camera.clone());
        let mut tracks: Vec<Vec<(u32, u32)>> = vec![Vec::new(); self.points.len()];
        for (f, pose) in self.poses.iter().enumerate() {
            let id = f as u32 + 1;
            let mut points2d = Vec::new();
            for (p, track) in tracks.iter_mut().enumerate() {
                if let Some((x, y, _)) = self.pixel(f, p, scale) {
                    track.push((id, points2d.len() as u32));
                    points2d.push(Point2D { x, y, point3d_id: p as i64 + 1 });
                }
            }
            let pose = pose.scaled(1.0 / scale);
            model.images.insert(
                id,
                ColmapImage {
                    id,
                    qvec: pose.quaternion(),
                    tvec: *pose.translation(),
                    camera_id: 1,
                    name: format!("frame_{f:03}.png"),
                    points2d,
                },
            );
        }
        for (p, track) in tracks.into_iter().enumerate() {
            model.points.insert(
                p as u64 + 1,
                Point3D { id: p as u64 + 1, xyz: self.points[p] / scale, rgb: [128, 128, 128], error: 0.5, track },
            );
        }
        model
    }

    /// Sparse metric depth of frame `f` times `gain`; pixels hit by two points stay invalid.
    pub fn depth(&self, f: usize, gain: f64) -> DepthMap {
        let (w, h) = (WIDTH as usize, HEIGHT as usize);
        let mut values = vec![0.0; w * h];
        let mut hits = vec![0u8; w * h];
        for p in 0..self.points.len() {
            if let Some((x, y, z)) = self.pixel(f, p, 1.0) {
                let i = y.floor() as usize * w + x.floor() as usize;
                hits[i] = hits[i].saturating_add(1);
                values[i] = z * gain;
            }
        }
        for (v, n) in values.iter_mut().zip(&hits) {
            if *n > 1 {
                *v = 0.0;
            }
        }
        DepthMap::from_values(w, h, values).unwrap()
    }

    /// Matches between consecutive frames, with optional Gaussian-ish jitter on the second keypoint.
    pub fn matches(&self, rng: &mut ChaCha8Rng, jitter: f64) -> Vec<MatchSet> {
        (1..self.poses.len())
            .map(|f| {
                let m = (0..self.points.len())
                    .filter_map(|p| {
                        let (x1, y1, _) = self.pixel(f - 1, p, 1.0)?;
                        let (x2, y2, _) = self.pixel(f, p, 1.0)?;
                        let j = |rng: &mut ChaCha8Rng| jitter * (rng.random::<f64>() + rng.random::<f64>() - 1.0);
                        Some(Correspondence::new(x1, y1, x2 + j(rng), y2 + j(rng)))
                    })
                    .collect();
                MatchSet::new((f - 1, f), m).unwrap()
            })
            .collect()
    }
}

pub struct CorpusScene {
    pub id: String,
    pub scale: f64,
    /// Per-frame depth gain is `1 ± bias`, alternating, so the per-frame
    /// scale variance is `(scale·bias)²` for an even frame count.
    pub bias: f64,
    pub dir: PathBuf,
}

/// Writes `n` calibration scenes under `root` and returns them with their manifest entries.
pub fn calibration_corpus(root: &Path, n: usize, seed: u64) -> (Vec<CorpusScene>, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::new();
    let mut manifest = String::new();
    for i in 0..n {
        let rig = Rig::new(&mut rng, 6, 150);
        let scale = rng.random_range(0.2..5.0);
        let bias = 0.01 * (i + 1) as f64 * rng.random_range(0.5..1.5);
        let id = format!("scene_{i:02}");
        let dir = root.join(&id);
        write_colmap(&rig.model(scale), &dir.join("sparse")).unwrap();
        std::fs::create_dir_all(dir.join("depth")).unwrap();
        for f in 0..rig.poses.len() {
            let gain = if f % 2 == 0 { 1.0 + bias } else { 1.0 - bias };
            write_depth(&rig.depth(f, gain), &dir.join("depth").join(format!("frame_{f:03}.f32"))).unwrap();
        }
        manifest.push_str(&format!(
            "[[scenes]]\nid = \"{id}\"\ncolmap = \"{id}/sparse\"\ndepths = \"{id}/depth\"\nconditioning = [0]\n\n"
        ));
        scenes.push(CorpusScene { id, scale, bias, dir });
    }
    (scenes, manifest)
}
