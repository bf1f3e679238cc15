//! `nvs4d mixture-check`: empirical draw frequencies against the configured mixture.

use nvs4d_core::ingest::mixture::Mixture;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Status;
use crate::config::MixtureSection;
use crate::report::{Cell, Table};

/// Frequencies further than this many binomial standard deviations fail the check.
pub const Z_LIMIT: f64 = 4.0;

pub fn run(cfg: &MixtureSection, seed: u64) -> anyhow::Result<(Table, Status)> {
    let mix = Mixture::new(cfg.datasets.clone(), cfg.video_prob)?;
    if cfg.draws == 0 {
        return Err(crate::config::config_error("draws must be positive"));
    }
    let datasets = mix.datasets();
    let n_videos = datasets.iter().filter(|d| !d.is_posed()).count();
    let posed_scenes: usize = datasets.iter().filter(|d| d.is_posed()).map(|d| d.scene_count).sum();
    let expected: Vec<f64> = datasets
        .iter()
        .map(|d| {
            if d.is_posed() {
                (1.0 - cfg.video_prob) * d.scene_count as f64 / posed_scenes as f64
            } else {
                cfg.video_prob / n_videos as f64
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; datasets.len()];
    let mut bad_windows = vec![0usize; datasets.len()];
    for _ in 0..cfg.draws {
        let d = mix.sample(&mut rng);
        counts[d.dataset] += 1;
        let desc = &datasets[d.dataset];
        let ok = match (desc.window, d.window) {
            (Some(k), Some(w)) => w.len == k && w.timesteps().end <= desc.scene_length.unwrap_or(k),
            (None, None) => d.scene < desc.scene_count,
            _ => false,
        };
        if !ok {
            bad_windows[d.dataset] += 1;
        }
    }

    let n = cfg.draws as f64;
    let mut table = Table::new(["dataset", "kind", "scene_count", "expected", "observed", "count", "z", "bad_windows"]);
    let mut status = Status::Ok;
    for (i, d) in datasets.iter().enumerate() {
        let p = expected[i];
        let sd = (n * p * (1.0 - p)).sqrt();
        let z = if sd > 0.0 { (counts[i] as f64 - n * p) / sd } else { 0.0 };
        if z.abs() > Z_LIMIT || bad_windows[i] > 0 {
            eprintln!("dataset {}: z = {z:.2}, {} bad windows", d.name, bad_windows[i]);
            status = Status::Partial;
        }
        table.push(vec![
            Cell::Text(d.name.clone()),
            Cell::Text(d.kind.as_str().into()),
            Cell::Int(d.scene_count),
            Cell::Num(p),
            Cell::Num(counts[i] as f64 / n),
            Cell::Int(counts[i]),
            Cell::Num(z),
            Cell::Int(bad_windows[i]),
        ]);
    }
    Ok((table, status))
}
