//! `nvs4d toy-sample` and `nvs4d sweep` on the Gaussian toy world.

use nalgebra::DVector;
use nvs4d_core::diffusion::guidance::{ConditioningMask, GuidanceSpec, Signals};
use nvs4d_core::diffusion::sampler::{ddim_sample, sample_moments, SamplerConfig};
use nvs4d_core::diffusion::sweep::{distance_to_mean, guidance_sweep, pareto_front, sample_spread, SweepConfig};
use nvs4d_core::diffusion::{GaussianWorld, NoiseSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{SweepSection, ToySection, WorldSection};
use crate::report::{Cell, Table};

/// The toy world and its observed signals, both fixed by `world_seed`.
pub fn world(cfg: &WorldSection) -> anyhow::Result<(GaussianWorld, Signals)> {
    let world = GaussianWorld::toy(cfg.dim, cfg.world_seed)?;
    let (_, signals) = world.sample_signals(&mut ChaCha8Rng::seed_from_u64(cfg.world_seed));
    Ok((world, signals))
}

fn sampler(cfg: &WorldSection, seed: u64) -> SamplerConfig {
    SamplerConfig {
        steps: cfg.steps,
        seed,
        n_samples: cfg.n_samples,
        kind: cfg.sampler,
        schedule: NoiseSchedule::default(),
    }
}

pub struct ToyOutput {
    pub moments: Table,
    pub samples: Vec<DVector<f64>>,
    pub max_mean_error: f64,
    pub cov_error: f64,
}

/// Draws samples and compares their moments with the exact full conditional.
pub fn toy_sample(cfg: &ToySection, seed: u64) -> anyhow::Result<ToyOutput> {
    let (world, signals) = world(&cfg.world)?;
    let spec = GuidanceSpec::new(cfg.weights.clone())?;
    let samples = ddim_sample(&world, &spec, &signals, &sampler(&cfg.world, seed))?;
    let (m, c) = sample_moments(&samples)?;
    let (pm, pc) = world.conditional(ConditioningMask::FULL, &signals)?;

    let mut t = Table::new(["statistic", "component", "sample", "exact", "abs_error"]);
    for i in 0..m.len() {
        t.push(vec![Cell::Text("mean".into()), Cell::Int(i), Cell::Num(m[i]), Cell::Num(pm[i]), Cell::Num((m[i] - pm[i]).abs())]);
    }
    for i in 0..m.len() {
        let (s, e) = (c[(i, i)], pc[(i, i)]);
        t.push(vec![Cell::Text("var".into()), Cell::Int(i), Cell::Num(s), Cell::Num(e), Cell::Num((s - e).abs())]);
    }
    let max_mean_error = (&m - &pm).amax();
    let cov_error = (&c - &pc).norm();
    t.push(vec![Cell::Text("max_mean_error".into()), Cell::Na, Cell::Na, Cell::Na, Cell::Num(max_mean_error)]);
    t.push(vec![Cell::Text("cov_frobenius_error".into()), Cell::Na, Cell::Na, Cell::Na, Cell::Num(cov_error)]);
    Ok(ToyOutput { moments: t, samples, max_mean_error, cov_error })
}

pub fn samples_table(samples: &[DVector<f64>]) -> Table {
    let d = samples.first().map_or(0, |s| s.len());
    let mut t = Table::new((0..d).map(|i| format!("x{i}")));
    for s in samples {
        t.push(s.iter().map(|&v| Cell::Num(v)).collect());
    }
    t
}

/// Two-stage guidance sweep; one row per grid point with a Pareto flag per stage.
pub fn sweep(cfg: &SweepSection, seed: u64) -> anyhow::Result<Table> {
    let (world, signals) = world(&cfg.world)?;
    let (posterior_mean, _) = world.conditional(ConditioningMask::FULL, &signals)?;
    let metrics = [distance_to_mean(posterior_mean), sample_spread()];
    let sweep_cfg = SweepConfig {
        stage1: cfg.stage1.clone(),
        stage2: cfg.stage2.clone(),
        vary: cfg.vary,
        objective: 0,
        sampler: sampler(&cfg.world, seed),
    };
    let table = guidance_sweep(&world, &signals, &sweep_cfg, &metrics)?;

    let mut columns = vec!["stage".to_string(), "w_image".into(), "w_pose".into(), "w_time".into()];
    columns.extend(metrics.iter().map(|m| m.name.clone()));
    columns.push("pareto".into());
    let mut out = Table::new(columns);
    for stage in [1u8, 2] {
        let rows: Vec<_> = table.rows.iter().filter(|r| r.stage == stage).collect();
        let front = pareto_front(&rows.iter().map(|r| (r.metrics[0].1, r.metrics[1].1)).collect::<Vec<_>>());
        for (i, r) in rows.iter().enumerate() {
            let mut cells = vec![Cell::Int(stage as usize)];
            cells.extend(r.weights.iter().map(|&w| Cell::Num(w)));
            cells.extend(r.metrics.iter().map(|(_, v)| Cell::Num(*v)));
            cells.push(Cell::Int(front.contains(&i) as usize));
            out.push(cells);
        }
    }
    eprintln!("stage-1 optimum w = {}", table.stage1_optimum);
    Ok(out)
}
