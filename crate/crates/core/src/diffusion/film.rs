//! Masked FiLM: feature-wise modulation that is the identity when its
//! conditioning signal is absent.

use nalgebra::{DMatrix, DVector};

use super::{DiffusionError, Result};

/// Affine maps from a signal embedding to per-feature scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmParams {
    pub scale_weight: DMatrix<f64>,
    pub scale_bias: DVector<f64>,
    pub shift_weight: DMatrix<f64>,
    pub shift_bias: DVector<f64>,
}

impl FilmParams {
    pub fn new(
        scale_weight: DMatrix<f64>,
        scale_bias: DVector<f64>,
        shift_weight: DMatrix<f64>,
        shift_bias: DVector<f64>,
    ) -> Result<Self> {
        let features = scale_bias.len();
        let embed = scale_weight.ncols();
        let ok = scale_weight.nrows() == features
            && shift_weight.nrows() == features
            && shift_bias.len() == features
            && shift_weight.ncols() == embed;
        if !ok {
            return Err(DiffusionError::InvalidInput("FiLM parameter shapes disagree".into()));
        }
        Ok(Self { scale_weight, scale_bias, shift_weight, shift_bias })
    }

    pub fn features(&self) -> usize {
        self.scale_bias.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.scale_weight.ncols()
    }

    pub fn scale(&self, signal: &DVector<f64>) -> DVector<f64> {
        &self.scale_weight * signal + &self.scale_bias
    }

    pub fn shift(&self, signal: &DVector<f64>) -> DVector<f64> {
        &self.shift_weight * signal + &self.shift_bias
    }
}

/// `scale(signal) ⊙ h + shift(signal)` when the signal is present; `h` unchanged when masked.
pub fn masked_film(h: &DVector<f64>, signal: Option<&DVector<f64>>, params: &FilmParams) -> Result<DVector<f64>> {
    if h.len() != params.features() {
        return Err(DiffusionError::InvalidInput(format!(
            "feature length {} does not match FiLM width {}",
            h.len(),
            params.features()
        )));
    }
    let Some(signal) = signal else {
        // Returned untouched: 1·h + 0 would turn −0.0 into +0.0.
        return Ok(h.clone());
    };
    if signal.len() != params.embedding_dim() {
        return Err(DiffusionError::InvalidInput(format!(
            "embedding length {} does not match FiLM input {}",
            signal.len(),
            params.embedding_dim()
        )));
    }
    Ok(params.scale(signal).component_mul(h) + params.shift(signal))
}
