//! `nvs4d calibrate`: per-scene metric scale, variance filtering, rescaled models.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use nvs4d_core::calibrate::{filter_scenes, frame_scale, scene_scale, CalibrateError, FrameOutcome, SceneCalibration};
use nvs4d_core::ingest::colmap::{parse_colmap, write_colmap, ColmapModel};
use nvs4d_core::ingest::depth::read_depth;
use rayon::prelude::*;

use super::Status;
use crate::config::{config_error, SceneManifest};
use crate::report::{emit, Cell, Table};

pub struct Options {
    pub out_dir: PathBuf,
    pub discard_fraction: f64,
    pub min_points: usize,
}

pub struct SceneResult {
    pub image_ids: Vec<u32>,
    pub frames: Vec<FrameOutcome>,
    pub calibration: Result<SceneCalibration, String>,
    pub model: ColmapModel,
}

/// Depth file for an image: `<stem>.f32`, else `<stem>.pgm`.
fn depth_path(dir: &Path, image_name: &str) -> Option<PathBuf> {
    let stem = Path::new(image_name).file_stem()?.to_string_lossy().into_owned();
    ["f32", "pgm"].iter().map(|ext| dir.join(format!("{stem}.{ext}"))).find(|p| p.is_file())
}

fn calibrate_scene(scene: &SceneManifest, min_points: usize) -> anyhow::Result<(ColmapModel, Vec<u32>, Vec<FrameOutcome>)> {
    let colmap = scene.colmap.as_ref().ok_or_else(|| anyhow!("no `colmap` model given"))?;
    let depths = scene.depths.as_ref().ok_or_else(|| anyhow!("no `depths` directory given"))?;
    let model = parse_colmap(colmap)?;
    let traj = model.trajectory(&scene.conditioning)?;
    let ids = model.image_ids();
    let mut frames = Vec::with_capacity(ids.len());
    for (id, frame) in ids.iter().zip(traj.frames()) {
        let image = &model.images[id];
        let Some(path) = depth_path(depths, &image.name) else {
            frames.push(FrameOutcome::Insufficient { samples: 0 });
            continue;
        };
        let depth = read_depth(&path)?;
        let k = frame.intrinsics;
        if (depth.width(), depth.height()) != (k.width as usize, k.height as usize) {
            bail!(
                "{}: depth map is {}x{} but camera is {}x{}",
                path.display(),
                depth.width(),
                depth.height(),
                k.width,
                k.height
            );
        }
        let outcome = match frame_scale(&model.points_seen_by(*id), &depth, &k, &frame.pose, min_points) {
            Ok(o) => o,
            Err(CalibrateError::NoVisiblePoints) => FrameOutcome::Insufficient { samples: 0 },
            Err(e) => return Err(e.into()),
        };
        frames.push(outcome);
    }
    Ok((model, ids, frames))
}

pub fn run_scenes(scenes: &[SceneManifest], min_points: usize) -> Vec<Result<SceneResult, String>> {
    scenes
        .par_iter()
        .map(|scene| {
            let (model, image_ids, frames) = calibrate_scene(scene, min_points).map_err(|e| format!("{e:#}"))?;
            let calibration = scene_scale(&frames).map_err(|e| e.to_string());
            Ok(SceneResult { image_ids, frames, calibration, model })
        })
        .collect()
}

pub fn run(scenes: &[SceneManifest], opts: &Options) -> anyhow::Result<Status> {
    if !(0.0..1.0).contains(&opts.discard_fraction) {
        return Err(config_error(format!("discard_fraction {} not in [0, 1)", opts.discard_fraction)));
    }
    let results = run_scenes(scenes, opts.min_points);

    let calibrated: Vec<usize> =
        (0..results.len()).filter(|&i| matches!(&results[i], Ok(r) if r.calibration.is_ok())).collect();
    let variances: Vec<f64> = calibrated
        .iter()
        .map(|&i| results[i].as_ref().unwrap().calibration.as_ref().unwrap().variance)
        .collect();
    let kept: Vec<usize> = filter_scenes(&variances, opts.discard_fraction)?.into_iter().map(|j| calibrated[j]).collect();

    let mut scenes_csv = Table::new(["scene", "status", "frames", "frames_used", "mean_scale", "variance", "kept"]);
    let mut frames_csv = Table::new(["scene", "frame", "image_id", "scale", "samples"]);
    let mut status = Status::Ok;
    for (i, (scene, result)) in scenes.iter().zip(&results).enumerate() {
        let id = Cell::Text(scene.id.clone());
        let r = match result {
            Ok(r) => r,
            Err(e) => {
                eprintln!("scene {}: {e}", scene.id);
                status = Status::Partial;
                scenes_csv.push(vec![id, Cell::Text("error".into()), Cell::Na, Cell::Na, Cell::Na, Cell::Na, Cell::Int(0)]);
                continue;
            }
        };
        for (f, (image_id, outcome)) in r.image_ids.iter().zip(&r.frames).enumerate() {
            let (scale, samples) = match outcome {
                FrameOutcome::Scale(s) => (Cell::Num(s.scale), s.inliers),
                FrameOutcome::Insufficient { samples } => (Cell::Na, *samples),
            };
            frames_csv.push(vec![id.clone(), Cell::Int(f), Cell::Int(*image_id as usize), scale, Cell::Int(samples)]);
        }
        match &r.calibration {
            Ok(c) => scenes_csv.push(vec![
                id,
                Cell::Text("ok".into()),
                Cell::Int(r.frames.len()),
                Cell::Int(c.per_frame_scales.len()),
                Cell::Num(c.mean_scale),
                Cell::Num(c.variance),
                Cell::Int(kept.contains(&i) as usize),
            ]),
            Err(e) => {
                eprintln!("scene {}: {e}", scene.id);
                status = Status::Partial;
                scenes_csv.push(vec![
                    id,
                    Cell::Text("uncalibratable".into()),
                    Cell::Int(r.frames.len()),
                    Cell::Int(0),
                    Cell::Na,
                    Cell::Na,
                    Cell::Int(0),
                ]);
            }
        }
    }

    std::fs::create_dir_all(&opts.out_dir).with_context(|| format!("creating {}", opts.out_dir.display()))?;
    emit(&scenes_csv.to_csv(), Some(&opts.out_dir.join("calibration.csv")))?;
    emit(&frames_csv.to_csv(), Some(&opts.out_dir.join("frame_scales.csv")))?;
    for &i in &kept {
        let r = results[i].as_ref().unwrap();
        let Ok(c) = &r.calibration else { continue };
        write_colmap(&r.model.scaled(c.mean_scale), &opts.out_dir.join(&scenes[i].id).join("sparse"))?;
    }
    eprintln!(
        "calibrated {} of {} scenes, kept {}, discarded {}",
        calibrated.len(),
        scenes.len(),
        kept.len(),
        calibrated.len() - kept.len()
    );
    Ok(status)
}
