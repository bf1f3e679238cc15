//! `nvs4d metrics`: per-scene TSED, SfM distances, keypoint distance, PSNR/SSIM.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use nvs4d_core::align::sfm_distances;
use nvs4d_core::epipolar::{trajectory_tsed, TsedConfig};
use nvs4d_core::imgmetrics::{keypoint_distance, psnr, ssim, SsimConfig};
use nvs4d_core::ingest::colmap::parse_colmap;
use nvs4d_core::ingest::imageio::read_image;
use nvs4d_core::ingest::matches::read_matches;
use rayon::prelude::*;

use super::Status;
use crate::config::{MetricKind, SceneManifest};
use crate::report::{Cell, Table};

pub struct Options {
    pub which: Vec<MetricKind>,
    pub tsed: TsedConfig,
}

fn columns(kind: MetricKind) -> &'static [&'static str] {
    match kind {
        MetricKind::Tsed => &["tsed", "tsed_scored_pairs", "tsed_discarded_pairs", "tsed_real"],
        MetricKind::Sfmd => &["sfmd_pos", "sfmd_rot", "sfmd_pos_real", "sfmd_rot_real"],
        MetricKind::Kd => &["kd", "kd_real"],
        MetricKind::PsnrSsim => &["psnr", "ssim"],
    }
}

/// Outcome of one metric input: not configured, failed, or computed.
enum Value<T> {
    Missing,
    Failed(String),
    Done(T),
}

impl<T> Value<T> {
    fn from(input: Option<anyhow::Result<T>>) -> Self {
        match input {
            None => Value::Missing,
            Some(Ok(v)) => Value::Done(v),
            Some(Err(e)) => Value::Failed(format!("{e:#}")),
        }
    }

    fn cells(self, errors: &mut Vec<String>, label: &str, f: impl FnOnce(T) -> Vec<Cell>, width: usize) -> Vec<Cell> {
        match self {
            Value::Done(v) => f(v),
            Value::Failed(e) => {
                errors.push(format!("{label}: {e}"));
                vec![Cell::Na; width]
            }
            Value::Missing => vec![Cell::Na; width],
        }
    }
}

fn tsed_of(colmap: &Path, matches: &Path, scene: &SceneManifest, cfg: &TsedConfig) -> anyhow::Result<(f64, usize, usize)> {
    let traj = parse_colmap(colmap)?.trajectory(&scene.conditioning)?;
    let sets = read_matches(matches)?;
    let rep = trajectory_tsed(&traj, &sets, cfg)?;
    Ok((rep.score, rep.scored_pairs, rep.discarded_pairs))
}

fn sfmd_of(predicted: &Path, reference: &Path, scene: &SceneManifest) -> anyhow::Result<(f64, f64)> {
    let pred = parse_colmap(predicted)?.trajectory(&scene.conditioning)?;
    let reference = parse_colmap(reference)?.trajectory(&scene.conditioning)?;
    let rep = sfm_distances(&pred, &reference, scene.anchor())?;
    Ok((rep.sfmd_pos, rep.sfmd_rot))
}

fn kd_of(matches: &Path, min_matches: usize) -> anyhow::Result<f64> {
    Ok(keypoint_distance(&read_matches(matches)?, min_matches)?.mean)
}

fn image_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| {
        p.is_file()
            && p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm" | "ppm" | "pnm"))
    });
    files.sort();
    Ok(files)
}

/// Mean PSNR and SSIM over frames paired by sorted file name.
fn psnr_ssim_of(generated: &Path, truth: &Path) -> anyhow::Result<(f64, f64)> {
    let (g, t) = (image_files(generated)?, image_files(truth)?);
    if g.is_empty() || g.len() != t.len() {
        bail!("{} generated vs {} ground-truth images", g.len(), t.len());
    }
    let cfg = SsimConfig::default();
    let (mut p, mut s) = (0.0, 0.0);
    for (a, b) in g.iter().zip(&t) {
        let (a, b) = (read_image(a)?, read_image(b)?);
        p += psnr(&a, &b)?;
        s += ssim(&a, &b, &cfg)?;
    }
    Ok((p / g.len() as f64, s / g.len() as f64))
}

fn both<'a>(a: &'a Option<PathBuf>, b: &'a Option<PathBuf>) -> Option<(&'a Path, &'a Path)> {
    a.as_deref().zip(b.as_deref())
}

fn scene_row(scene: &SceneManifest, opts: &Options) -> (Vec<Cell>, Vec<String>) {
    let mut row = vec![Cell::Text(scene.id.clone())];
    let mut errors = Vec::new();
    for &kind in &opts.which {
        match kind {
            MetricKind::Tsed => {
                let generated = both(&scene.colmap, &scene.matches).map(|(c, m)| tsed_of(c, m, scene, &opts.tsed));
                row.extend(Value::from(generated).cells(
                    &mut errors,
                    "tsed",
                    |(s, scored, discarded)| vec![Cell::Num(s), Cell::Int(scored), Cell::Int(discarded)],
                    3,
                ));
                let real = both(&scene.colmap, &scene.real_matches).map(|(c, m)| tsed_of(c, m, scene, &opts.tsed));
                row.extend(Value::from(real).cells(&mut errors, "tsed_real", |(s, _, _)| vec![Cell::Num(s)], 1));
            }
            MetricKind::Sfmd => {
                let generated = both(&scene.predicted, &scene.reference).map(|(p, r)| sfmd_of(p, r, scene));
                row.extend(Value::from(generated).cells(&mut errors, "sfmd", |(p, r)| vec![Cell::Num(p), Cell::Num(r)], 2));
                let real = both(&scene.real_predicted, &scene.reference).map(|(p, r)| sfmd_of(p, r, scene));
                row.extend(Value::from(real).cells(&mut errors, "sfmd_real", |(p, r)| vec![Cell::Num(p), Cell::Num(r)], 2));
            }
            MetricKind::Kd => {
                for (label, m) in [("kd", &scene.matches), ("kd_real", &scene.real_matches)] {
                    let v = m.as_deref().map(|m| kd_of(m, opts.tsed.min_matches));
                    row.extend(Value::from(v).cells(&mut errors, label, |v| vec![Cell::Num(v)], 1));
                }
            }
            MetricKind::PsnrSsim => {
                let v = both(&scene.images, &scene.ground_truth).map(|(g, t)| psnr_ssim_of(g, t));
                row.extend(Value::from(v).cells(&mut errors, "psnr-ssim", |(p, s)| vec![Cell::Num(p), Cell::Num(s)], 2));
            }
        }
    }
    (row, errors)
}

pub fn report(scenes: &[SceneManifest], opts: &Options) -> anyhow::Result<(Table, Status)> {
    opts.tsed.validate().map_err(|e| anyhow!(e))?;
    let mut which = opts.which.clone();
    which.sort_unstable();
    which.dedup();
    let opts = Options { which, tsed: opts.tsed };
    let mut table = Table::new(std::iter::once("scene").chain(opts.which.iter().flat_map(|&k| columns(k).iter().copied())));
    let rows: Vec<_> = scenes.par_iter().map(|s| scene_row(s, &opts)).collect();
    let mut status = Status::Ok;
    for (scene, (row, errors)) in scenes.iter().zip(rows) {
        for e in errors {
            eprintln!("scene {}: {e}", scene.id);
            status = Status::Partial;
        }
        table.push(row);
    }
    table.push_aggregate("mean");
    Ok((table, status))
}
