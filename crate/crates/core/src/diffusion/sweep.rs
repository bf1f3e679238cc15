//! Two-stage guidance sweep.
//!
//! Stage 1 sweeps one weight shared by all signals and picks the best value
//! under an objective metric. Stage 2 holds that value and varies the weight
//! of a single signal.

use std::fmt::Write as _;

use nalgebra::DVector;

use super::guidance::{DenoiserOracle, GuidanceSpec, Signal, Signals, NUM_SIGNALS};
use super::sampler::{ddim_sample, sample_moments, SamplerConfig};
use super::{DiffusionError, Result};

pub const SWEEP_CSV_HEADER: &str = "stage,w_image,w_pose,w_time,metric_name,metric_value";

type MetricFn = dyn Fn(&[DVector<f64>]) -> f64 + Send + Sync;

/// A named scalar summary of a sample set.
pub struct Metric {
    pub name: String,
    f: Box<MetricFn>,
}

impl Metric {
    pub fn new(name: impl Into<String>, f: impl Fn(&[DVector<f64>]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Box::new(f) }
    }

    pub fn eval(&self, samples: &[DVector<f64>]) -> f64 {
        (self.f)(samples)
    }
}

impl std::fmt::Debug for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Metric").field("name", &self.name).finish()
    }
}

/// Euclidean distance between the sample mean and `target`.
pub fn distance_to_mean(target: DVector<f64>) -> Metric {
    Metric::new("dist_to_posterior_mean", move |s| match sample_moments(s) {
        Ok((m, _)) => (m - &target).norm(),
        Err(_) => f64::NAN,
    })
}

/// Mean squared distance of samples from their own mean (trace of the covariance).
pub fn sample_spread() -> Metric {
    Metric::new("sample_spread", |s| match sample_moments(s) {
        Ok((_, c)) => c.trace(),
        Err(_) => f64::NAN,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepConfig {
    pub stage1: Vec<f64>,
    pub stage2: Vec<f64>,
    pub vary: Signal,
    /// Index into the metric list of the value minimized in stage 1.
    pub objective: usize,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub stage: u8,
    pub weights: [f64; NUM_SIGNALS],
    pub metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Shared weight selected in stage 1.
    pub stage1_optimum: f64,
}

impl SweepTable {
    /// One CSV line per (row, metric) under [`SWEEP_CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(SWEEP_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            for (name, value) in &row.metrics {
                let [wi, wp, wt] = row.weights;
                let _ = writeln!(out, "{},{wi},{wp},{wt},{name},{value}", row.stage);
            }
        }
        out
    }
}

fn evaluate<O: DenoiserOracle + ?Sized>(
    oracle: &O,
    signals: &Signals,
    weights: [f64; NUM_SIGNALS],
    sampler: &SamplerConfig,
    metrics: &[Metric],
) -> Result<Vec<(String, f64)>> {
    let spec = GuidanceSpec::new(weights.to_vec())?;
    let samples = ddim_sample(oracle, &spec, signals, sampler)?;
    Ok(metrics.iter().map(|m| (m.name.clone(), m.eval(&samples))).collect())
}

pub fn guidance_sweep<O: DenoiserOracle + ?Sized>(
    oracle: &O,
    signals: &Signals,
    cfg: &SweepConfig,
    metrics: &[Metric],
) -> Result<SweepTable> {
    if cfg.stage1.is_empty() {
        return Err(DiffusionError::InvalidInput("stage-1 grid is empty".into()));
    }
    if metrics.is_empty() || cfg.objective >= metrics.len() {
        return Err(DiffusionError::InvalidInput("objective metric index out of range".into()));
    }
    let mut rows = Vec::with_capacity(cfg.stage1.len() + cfg.stage2.len());
    let mut best: Option<(f64, f64)> = None;
    for &w in &cfg.stage1 {
        let weights = [w; NUM_SIGNALS];
        let values = evaluate(oracle, signals, weights, &cfg.sampler, metrics)?;
        let score = values[cfg.objective].1;
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((w, score));
        }
        rows.push(SweepRow { stage: 1, weights, metrics: values });
    }
    let (w_star, _) = best.expect("stage-1 grid is nonempty");
    for &w in &cfg.stage2 {
        let mut weights = [w_star; NUM_SIGNALS];
        weights[cfg.vary.index()] = w;
        let values = evaluate(oracle, signals, weights, &cfg.sampler, metrics)?;
        rows.push(SweepRow { stage: 2, weights, metrics: values });
    }
    Ok(SweepTable { rows, stage1_optimum: w_star })
}

/// Indices of points not dominated when both coordinates are minimized.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let (a, b) = points[i];
            !points.iter().enumerate().any(|(j, &(c, d))| j != i && c <= a && d <= b && (c < a || d < b))
        })
        .collect()
}
