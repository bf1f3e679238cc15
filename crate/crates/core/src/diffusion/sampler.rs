//! Guided diffusion samplers: deterministic (DDIM / probability-flow) and ancestral.
//!
//! Each sample draws from its own ChaCha stream keyed by `(seed, index)`, so
//! results do not depend on how many threads run the loop.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::guidance::{multi_guided_v, DenoiserOracle, GuidanceSpec, Signals};
use super::schedule::{alpha, sigma, NoiseSchedule};
use super::{DiffusionError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Deterministic,
    Ancestral,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    pub steps: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub kind: SamplerKind,
    pub schedule: NoiseSchedule,
}

impl SamplerConfig {
    pub fn deterministic(steps: usize, seed: u64, n_samples: usize) -> Self {
        Self { steps, seed, n_samples, kind: SamplerKind::Deterministic, schedule: NoiseSchedule::default() }
    }
}

fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn normal_vec<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Runs one chain from `z ~ N(0, I)` at `t = 1` down to `t = 0` and returns
/// the final clean-data prediction.
pub fn sample_one<O: DenoiserOracle + ?Sized>(
    oracle: &O,
    spec: &GuidanceSpec,
    signals: &Signals,
    cfg: &SamplerConfig,
    index: usize,
) -> Result<DVector<f64>> {
    let mut rng = stream_rng(cfg.seed, index);
    let d = oracle.dim();
    let mut z = normal_vec(&mut rng, d);
    let n = cfg.steps;
    for i in (1..=n).rev() {
        let lt = cfg.schedule.logsnr(i as f64 / n as f64)?;
        let ls = cfg.schedule.logsnr((i - 1) as f64 / n as f64)?;
        let v = multi_guided_v(oracle, &z, lt, spec, signals)?;
        let (at, st) = (alpha(lt), sigma(lt));
        let (as_, ss) = (alpha(ls), sigma(ls));
        let x_hat = &z * at - &v * st;
        z = match cfg.kind {
            SamplerKind::Deterministic => {
                let eps_hat = &z * st + &v * at;
                x_hat * as_ + eps_hat * ss
            }
            SamplerKind::Ancestral => {
                // q(z_s | z_t, x̂) for the variance-preserving process.
                let r = (lt - ls).exp();
                let mean = &z * (r * as_ / at) + x_hat * ((1.0 - r) * as_);
                let std = ((1.0 - r) * ss * ss).sqrt();
                mean + normal_vec(&mut rng, d) * std
            }
        };
    }
    let l0 = cfg.schedule.logsnr(0.0)?;
    let v = multi_guided_v(oracle, &z, l0, spec, signals)?;
    Ok(&z * alpha(l0) - v * sigma(l0))
}

/// Draws `cfg.n_samples` guided samples in parallel; output order is sample index.
pub fn ddim_sample<O: DenoiserOracle + ?Sized>(
    oracle: &O,
    spec: &GuidanceSpec,
    signals: &Signals,
    cfg: &SamplerConfig,
) -> Result<Vec<DVector<f64>>> {
    if cfg.steps == 0 {
        return Err(DiffusionError::InvalidInput("steps must be at least 1".into()));
    }
    (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| sample_one(oracle, spec, signals, cfg, i))
        .collect()
}

/// Sample mean and unbiased sample covariance.
pub fn sample_moments(samples: &[DVector<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let first = samples.first().ok_or_else(|| DiffusionError::InvalidInput("no samples".into()))?;
    let d = first.len();
    let n = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(d), |acc, s| acc + s) / n;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = s - &mean;
        cov += &c * c.transpose();
    }
    let denom = if samples.len() > 1 { n - 1.0 } else { 1.0 };
    Ok((mean, cov / denom))
}
