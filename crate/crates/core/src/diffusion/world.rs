//! Linear-Gaussian world model with an exact denoiser.
//!
//! Latent `x ~ N(μ₀, Σ₀)`; signal `j` observes `v_j = A_j·x + n_j` with
//! `n_j ~ N(0, Γ_j)`. Every nested conditional `p(x | v_{1:j})` is Gaussian,
//! so the optimal denoiser at any noise level is available in closed form.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::guidance::{ConditioningMask, DenoiserOracle, Signals, NUM_SIGNALS};
use super::schedule::{alpha, sigma};
use super::{DiffusionError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub map: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

/// Posterior at one nesting level, kept in eigen form for fast denoising.
#[derive(Debug, Clone)]
struct Level {
    cov: DMatrix<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct GaussianWorld {
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    observations: Vec<Observation>,
    prior_info_mean: DVector<f64>,
    /// `A_jᵀ Γ_j⁻¹`, one per signal.
    gains: Vec<DMatrix<f64>>,
    levels: Vec<Level>,
}

fn spd_cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() || (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(DiffusionError::InvalidInput(format!("{what} must be square and symmetric")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| DiffusionError::InvalidInput(format!("{what} is not positive definite")))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl GaussianWorld {
    pub fn new(prior_mean: DVector<f64>, prior_cov: DMatrix<f64>, observations: Vec<Observation>) -> Result<Self> {
        let d = prior_mean.len();
        if d == 0 || prior_cov.shape() != (d, d) {
            return Err(DiffusionError::InvalidInput("prior mean and covariance disagree".into()));
        }
        if observations.len() != NUM_SIGNALS {
            return Err(DiffusionError::InvalidInput(format!("need {NUM_SIGNALS} observation models")));
        }
        let prior_chol = spd_cholesky(&prior_cov, "prior covariance")?;
        let prior_info = prior_chol.inverse();
        let prior_info_mean = &prior_info * &prior_mean;

        let mut gains = Vec::with_capacity(NUM_SIGNALS);
        let mut info = prior_info.clone();
        let mut levels = Vec::with_capacity(NUM_SIGNALS + 1);
        levels.push(Self::level(prior_cov.clone()));
        for (j, obs) in observations.iter().enumerate() {
            let m = obs.map.nrows();
            if obs.map.ncols() != d || obs.noise.shape() != (m, m) {
                return Err(DiffusionError::InvalidInput(format!("observation {j} has inconsistent shapes")));
            }
            let noise_info = spd_cholesky(&obs.noise, "observation noise")?.inverse();
            let gain = obs.map.transpose() * noise_info;
            info += &gain * &obs.map;
            gains.push(gain);
            let cov = Cholesky::new(symmetrize(info.clone()))
                .ok_or_else(|| DiffusionError::InvalidInput("posterior information is singular".into()))?
                .inverse();
            levels.push(Self::level(symmetrize(cov)));
        }
        Ok(Self { prior_mean, prior_cov, observations, prior_info_mean, gains, levels })
    }

    fn level(cov: DMatrix<f64>) -> Level {
        let eig = SymmetricEigen::new(cov.clone());
        Level { cov, eigvecs: eig.eigenvectors, eigvals: eig.eigenvalues }
    }

    /// The reference toy world: random prior with eigenvalues in `[2, 4]` and
    /// three near-identity, mutually non-commuting observation maps with unit noise.
    pub fn toy(dim: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = normal(dim, dim).qr().q();
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let eig = DVector::from_fn(dim, |_, _| rng2.random_range(2.0..4.0));
        let prior_cov = symmetrize(&q * DMatrix::from_diagonal(&eig) * q.transpose());
        let prior_mean = normal(dim, 1).column(0) * 0.5;
        let scale = 0.4 / (dim as f64).sqrt();
        let observations = (0..NUM_SIGNALS)
            .map(|_| Observation {
                map: (DMatrix::identity(dim, dim) + normal(dim, dim) * scale) * 0.55,
                noise: DMatrix::identity(dim, dim),
            })
            .collect();
        Self::new(prior_mean, prior_cov, observations)
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Draws a latent from the prior and the three signals it generates.
    pub fn sample_signals<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, Signals) {
        let chol = Cholesky::new(self.prior_cov.clone()).expect("validated at construction");
        let d = self.dim();
        let x = &self.prior_mean + chol.l() * DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let values = self
            .observations
            .iter()
            .map(|o| {
                let nc = Cholesky::new(o.noise.clone()).expect("validated at construction");
                let n = DVector::from_fn(o.noise.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
                &o.map * &x + nc.l() * n
            })
            .collect();
        (x, Signals { values })
    }

    fn check_signals(&self, mask: ConditioningMask, signals: &Signals) -> Result<()> {
        let needed = mask.present_count();
        if signals.values.len() < needed {
            return Err(DiffusionError::InvalidInput(format!(
                "mask needs {needed} signals, {} given",
                signals.values.len()
            )));
        }
        for (j, v) in signals.values.iter().take(needed).enumerate() {
            if v.len() != self.observations[j].map.nrows() {
                return Err(DiffusionError::InvalidInput(format!("signal {j} has length {}", v.len())));
            }
        }
        Ok(())
    }

    /// Exact moments of `p(x | signals present in mask)`.
    pub fn conditional(&self, mask: ConditioningMask, signals: &Signals) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mean = self.conditional_mean(mask, signals)?;
        Ok((mean, self.levels[mask.present_count()].cov.clone()))
    }

    pub fn conditional_mean(&self, mask: ConditioningMask, signals: &Signals) -> Result<DVector<f64>> {
        self.check_signals(mask, signals)?;
        let level = &self.levels[mask.present_count()];
        let mut rhs = self.prior_info_mean.clone();
        for (gain, v) in self.gains.iter().zip(&signals.values).take(mask.present_count()) {
            rhs += gain * v;
        }
        Ok(&level.cov * rhs)
    }

    /// `(α²S + σ²I)⁻¹ (z − α·m)` evaluated in the eigenbasis of `S`, along with `S` applied to it.
    fn whitened_residual(&self, z: &DVector<f64>, lambda: f64, mask: ConditioningMask, mean: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let level = &self.levels[mask.present_count()];
        let (a, s) = (alpha(lambda), sigma(lambda));
        let r = level.eigvecs.transpose() * (z - mean * a);
        let solved = DVector::from_fn(r.len(), |i, _| r[i] / (a * a * level.eigvals[i] + s * s));
        let cov_solved = DVector::from_fn(r.len(), |i, _| solved[i] * level.eigvals[i]);
        (&level.eigvecs * solved, &level.eigvecs * cov_solved)
    }

    /// Score `∇_z log p(z)` of the noised conditional at logSNR `lambda`.
    pub fn score(&self, z: &DVector<f64>, lambda: f64, mask: ConditioningMask, signals: &Signals) -> Result<DVector<f64>> {
        let mean = self.conditional_mean(mask, signals)?;
        let (solved, _) = self.whitened_residual(z, lambda, mask, &mean);
        Ok(-solved)
    }
}

impl DenoiserOracle for GaussianWorld {
    fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    fn predict_v(&self, z: &DVector<f64>, lambda: f64, mask: ConditioningMask, signals: &Signals) -> Result<DVector<f64>> {
        if z.len() != self.dim() {
            return Err(DiffusionError::InvalidInput(format!("state has length {}, world dim {}", z.len(), self.dim())));
        }
        let mean = self.conditional_mean(mask, signals)?;
        let (solved, cov_solved) = self.whitened_residual(z, lambda, mask, &mean);
        let (a, s) = (alpha(lambda), sigma(lambda));
        let eps = &solved * s;
        let x = mean + cov_solved * a;
        Ok(eps * a - x * s)
    }
}
