//! Cosine logSNR schedule and v-parametrization conversions.

use super::{DiffusionError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ScheduleKind {
    CosineLogSnr,
}

/// Noise schedule `λ(t)` on `t ∈ [0, 1]`, decreasing from `lambda_max` to `lambda_min`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { kind: ScheduleKind::CosineLogSnr, lambda_min: -15.0, lambda_max: 15.0 }
    }
}

impl NoiseSchedule {
    pub fn new(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min.is_finite() && lambda_max.is_finite() && lambda_min < lambda_max) {
            return Err(DiffusionError::InvalidInput(format!(
                "logSNR range [{lambda_min}, {lambda_max}] is empty"
            )));
        }
        Ok(Self { kind: ScheduleKind::CosineLogSnr, lambda_min, lambda_max })
    }

    /// `λ(t) = −2·log tan(a + t·(b − a))` with `a`, `b` chosen so the endpoints hit exactly.
    pub fn logsnr(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(DiffusionError::InvalidInput(format!("t = {t} outside [0, 1]")));
        }
        if t == 0.0 {
            return Ok(self.lambda_max);
        }
        if t == 1.0 {
            return Ok(self.lambda_min);
        }
        let a = (-0.5 * self.lambda_max).exp().atan();
        let b = (-0.5 * self.lambda_min).exp().atan();
        Ok(-2.0 * (a + t * (b - a)).tan().ln())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Signal scale `α(λ) = √sigmoid(λ)`.
pub fn alpha(lambda: f64) -> f64 {
    sigmoid(lambda).sqrt()
}

/// Noise scale `σ(λ) = √sigmoid(−λ)`.
pub fn sigma(lambda: f64) -> f64 {
    sigmoid(-lambda).sqrt()
}

/// Converts a v-prediction to `(x̂, ε̂)`: `x̂ = α·z − σ·v`, `ε̂ = σ·z + α·v`.
pub fn v_convert(z: &[f64], v: &[f64], lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let (a, s) = (alpha(lambda), sigma(lambda));
    let x = z.iter().zip(v).map(|(z, v)| a * z - s * v).collect();
    let e = z.iter().zip(v).map(|(z, v)| s * z + a * v).collect();
    (x, e)
}

/// Inverse of the ε half of [`v_convert`]: `v = (ε − σ·z) / α`.
pub fn v_from_eps(z: &[f64], eps: &[f64], lambda: f64) -> Vec<f64> {
    let (a, s) = (alpha(lambda), sigma(lambda));
    z.iter().zip(eps).map(|(z, e)| (e - s * z) / a).collect()
}
