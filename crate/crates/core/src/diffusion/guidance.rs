//! Nested conditioning masks, conditioning dropout, and multi-guidance.
//!
//! Signals are ordered images → poses → timestamps. Only prefix masks are
//! valid (poses require images, timestamps require poses), so a mask is
//! fully described by how many leading signals are present.

use nalgebra::DVector;
use rand::Rng;

use super::schedule::{v_convert, v_from_eps};
use super::{DiffusionError, Result};

/// Number of conditioning signals: images, poses, timestamps.
pub const NUM_SIGNALS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Images,
    Poses,
    Timestamps,
}

impl Signal {
    pub const ALL: [Signal; NUM_SIGNALS] = [Signal::Images, Signal::Poses, Signal::Timestamps];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Presence flags for each signal; always one of the four nested masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConditioningMask {
    present: usize,
}

impl ConditioningMask {
    pub const FULL: Self = Self { present: 3 };
    pub const DROP_TIME: Self = Self { present: 2 };
    pub const DROP_TIME_POSE: Self = Self { present: 1 };
    pub const UNCONDITIONAL: Self = Self { present: 0 };

    /// Validates the nesting `poses ⇒ images`, `timestamps ⇒ poses`.
    pub fn new(images: bool, poses: bool, timestamps: bool) -> Result<Self> {
        if (poses && !images) || (timestamps && !poses) {
            return Err(DiffusionError::InvalidInput(format!(
                "mask (images={images}, poses={poses}, timestamps={timestamps}) is not nested"
            )));
        }
        Ok(Self { present: images as usize + poses as usize + timestamps as usize })
    }

    /// Mask with the first `n` signals present.
    pub fn prefix(n: usize) -> Self {
        Self { present: n.min(NUM_SIGNALS) }
    }

    pub fn present_count(&self) -> usize {
        self.present
    }

    pub fn is_present(&self, s: Signal) -> bool {
        s.index() < self.present
    }

    pub fn images(&self) -> bool {
        self.is_present(Signal::Images)
    }

    pub fn poses(&self) -> bool {
        self.is_present(Signal::Poses)
    }

    pub fn timestamps(&self) -> bool {
        self.is_present(Signal::Timestamps)
    }
}

/// How conditioning dropout picks a mask during training.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum DropoutScheme {
    /// With probability `p_drop` one of the three drop masks, chosen uniformly.
    Grouped { p_drop: f64 },
    /// Drop timestamps with probability `p_drop`; if dropped, drop poses with
    /// probability `p_drop`; if dropped, drop images with probability `p_drop`.
    NestedCoins { p_drop: f64 },
}

impl Default for DropoutScheme {
    fn default() -> Self {
        DropoutScheme::Grouped { p_drop: 0.1 }
    }
}

impl DropoutScheme {
    fn p_drop(&self) -> f64 {
        match *self {
            DropoutScheme::Grouped { p_drop } | DropoutScheme::NestedCoins { p_drop } => p_drop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p_drop();
        if !(0.0..1.0).contains(&p) {
            return Err(DiffusionError::InvalidInput(format!("p_drop = {p} not in [0, 1)")));
        }
        Ok(())
    }

    /// Probability of each mask, indexed by number of present signals.
    pub fn mask_probabilities(&self) -> [f64; NUM_SIGNALS + 1] {
        match *self {
            DropoutScheme::Grouped { p_drop } => [p_drop / 3.0, p_drop / 3.0, p_drop / 3.0, 1.0 - p_drop],
            DropoutScheme::NestedCoins { p_drop: p } => [p * p * p, p * p * (1.0 - p), p * (1.0 - p), 1.0 - p],
        }
    }
}

/// Draws one training-time conditioning mask.
pub fn sample_mask<R: Rng + ?Sized>(rng: &mut R, scheme: &DropoutScheme) -> Result<ConditioningMask> {
    scheme.validate()?;
    let mask = match *scheme {
        DropoutScheme::Grouped { p_drop } => {
            if rng.random::<f64>() >= p_drop {
                ConditioningMask::FULL
            } else {
                ConditioningMask::prefix(rng.random_range(0..NUM_SIGNALS))
            }
        }
        DropoutScheme::NestedCoins { p_drop } => {
            let mut present = NUM_SIGNALS;
            while present > 0 && rng.random::<f64>() < p_drop {
                present -= 1;
            }
            ConditioningMask::prefix(present)
        }
    };
    Ok(mask)
}

/// Guidance weights `w₁..w_k` on the first `k` signals, `1 ≤ k ≤ 3`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GuidanceSpec {
    weights: Vec<f64>,
}

impl GuidanceSpec {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() > NUM_SIGNALS {
            return Err(DiffusionError::InvalidInput(format!("need 1..={NUM_SIGNALS} weights, got {}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(DiffusionError::InvalidInput("guidance weights must be finite".into()));
        }
        Ok(Self { weights })
    }

    pub fn image_pose_time(w_image: f64, w_pose: f64, w_time: f64) -> Result<Self> {
        Self::new(vec![w_image, w_pose, w_time])
    }

    /// One shared weight on all three signals (standard classifier-free guidance).
    pub fn uniform(w: f64) -> Result<Self> {
        Self::new(vec![w; NUM_SIGNALS])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Coefficient on the prediction conditioned on the first `j` signals, `j = 0..=k`:
    /// `1 − w₁`, then `w_j − w_{j+1}`, then `w_k`.
    pub fn coefficients(&self) -> Vec<f64> {
        let w = &self.weights;
        let k = w.len();
        let mut c = Vec::with_capacity(k + 1);
        c.push(1.0 - w[0]);
        for j in 1..k {
            c.push(w[j - 1] - w[j]);
        }
        c.push(w[k - 1]);
        c
    }
}

/// Observed values of the conditioning signals, in signal order.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub values: Vec<DVector<f64>>,
}

/// A denoiser queried with a nested conditioning mask, returning a v-prediction.
pub trait DenoiserOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn predict_v(
        &self,
        z: &DVector<f64>,
        lambda: f64,
        mask: ConditioningMask,
        signals: &Signals,
    ) -> Result<DVector<f64>>;
}

impl<T: DenoiserOracle + ?Sized> DenoiserOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn predict_v(&self, z: &DVector<f64>, lambda: f64, mask: ConditioningMask, signals: &Signals) -> Result<DVector<f64>> {
        (**self).predict_v(z, lambda, mask, signals)
    }
}

/// Multi-guided v-prediction.
///
/// Combines `(1−w₁)·ε(∅) + Σ_{j=2..k}(w_{j−1}−w_j)·ε(v_{1:j−1}) + w_k·ε(v_{1:k})`
/// in ε-space, which is proportional to the score at fixed λ, then converts
/// back to v. Terms with a zero coefficient are not queried.
pub fn multi_guided_v<O: DenoiserOracle + ?Sized>(
    oracle: &O,
    z: &DVector<f64>,
    lambda: f64,
    spec: &GuidanceSpec,
    signals: &Signals,
) -> Result<DVector<f64>> {
    let coeffs = spec.coefficients();
    let active: Vec<(usize, f64)> = coeffs.iter().copied().enumerate().filter(|(_, c)| *c != 0.0).collect();
    if let [(j, c)] = active.as_slice() {
        if *c == 1.0 {
            // A single unit-weight term: the ε-space combination is that term itself.
            return oracle.predict_v(z, lambda, ConditioningMask::prefix(*j), signals);
        }
    }
    let mut eps = vec![0.0; z.len()];
    for (j, c) in active {
        let v = oracle.predict_v(z, lambda, ConditioningMask::prefix(j), signals)?;
        if v.len() != z.len() {
            return Err(DiffusionError::InvalidInput(format!("oracle returned {} values for dim {}", v.len(), z.len())));
        }
        let (_, e) = v_convert(z.as_slice(), v.as_slice(), lambda);
        for (acc, e) in eps.iter_mut().zip(e) {
            *acc += c * e;
        }
    }
    Ok(DVector::from_vec(v_from_eps(z.as_slice(), &eps, lambda)))
}
