//! Independent oracles and synthetic scenes shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use nvs4d_core::diffusion::{GaussianWorld, Signals};
use nvs4d_core::epipolar::{Correspondence, MatchSet};
use nvs4d_core::geometry::{axis_angle, Convention, Frame, FrameRole, Intrinsics, Pose, Trajectory};
use nvs4d_core::imgmetrics::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(normal(rng), normal(rng), normal(rng));
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    axis_angle(&random_unit(rng), rng.random_range(0.0..std::f64::consts::PI))
}

pub fn random_pose<R: Rng>(rng: &mut R, convention: Convention) -> Pose {
    let t = Vector3::new(normal(rng), normal(rng), normal(rng)) * 2.0;
    Pose::new(random_rotation(rng), t, convention).unwrap()
}

pub fn intrinsics() -> Intrinsics {
    Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
}

/// A forward-moving camera rig (world-from-camera poses) looking at a point
/// cloud that every camera sees.
pub struct Rig {
    pub k: Intrinsics,
    pub poses: Vec<Pose>,
    pub points: Vec<Vector3<f64>>,
}

fn pixel(k: &Intrinsics, pose: &Pose, x: &Vector3<f64>) -> Option<Vector2<f64>> {
    let pc = pose.parent_to_camera(x);
    if pc.z <= 0.1 {
        return None;
    }
    let p = Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy);
    let inside = p.x >= 0.0 && p.y >= 0.0 && p.x < k.width as f64 && p.y < k.height as f64;
    inside.then_some(p)
}

impl Rig {
    pub fn new<R: Rng>(rng: &mut R, n_cams: usize, n_points: usize) -> Self {
        let k = intrinsics();
        let poses: Vec<Pose> = (0..n_cams)
            .map(|i| {
                let r = axis_angle(&random_unit(rng), rng.random_range(0.0..0.08));
                let c = Vector3::new(0.4 * i as f64, 0.05 * normal(rng), 0.1 * i as f64 + 0.05 * normal(rng));
                Pose::new(r, c, Convention::WorldFromCamera).unwrap()
            })
            .collect();
        let mut points = Vec::with_capacity(n_points);
        while points.len() < n_points {
            let x = Vector3::new(rng.random_range(-1.5..3.0), rng.random_range(-1.5..1.5), rng.random_range(5.0..10.0));
            if poses.iter().all(|p| pixel(&k, p, &x).is_some()) {
                points.push(x);
            }
        }
        Self { k, poses, points }
    }

    /// Pixel of point `i` in camera `c`, computed without the library's projection.
    pub fn pixel(&self, c: usize, i: usize) -> Vector2<f64> {
        pixel(&self.k, &self.poses[c], &self.points[i]).expect("visible by construction")
    }

    pub fn matches(&self, a: usize, b: usize) -> MatchSet {
        let m = (0..self.points.len())
            .map(|i| {
                let (p, q) = (self.pixel(a, i), self.pixel(b, i));
                Correspondence::new(p.x, p.y, q.x, q.y)
            })
            .collect();
        MatchSet::new((a, b), m).unwrap()
    }

    pub fn trajectory(&self) -> Trajectory {
        trajectory(&self.poses, &self.k)
    }
}

pub fn trajectory(poses: &[Pose], k: &Intrinsics) -> Trajectory {
    Trajectory::new(
        poses
            .iter()
            .enumerate()
            .map(|(i, p)| Frame {
                pose: *p,
                intrinsics: *k,
                timestamp: i as f64,
                role: if i == 0 { FrameRole::Conditioning } else { FrameRole::Target },
            })
            .collect(),
    )
    .unwrap()
}

/// Gaussian conditional of the latent given the first `j` signals, by the
/// joint-covariance (Schur complement) route.
pub fn schur_conditional(world: &GaussianWorld, j: usize, signals: &Signals) -> (DVector<f64>, DMatrix<f64>) {
    let m0 = world.prior_mean().clone();
    let p = world.prior_cov().clone();
    if j == 0 {
        return (m0, p);
    }
    let d = m0.len();
    let obs = &world.observations()[..j];
    let rows: usize = obs.iter().map(|o| o.map.nrows()).sum();
    let mut a = DMatrix::zeros(rows, d);
    let mut gamma = DMatrix::zeros(rows, rows);
    let mut y = DVector::zeros(rows);
    let mut r = 0;
    for (i, o) in obs.iter().enumerate() {
        let n = o.map.nrows();
        a.view_mut((r, 0), (n, d)).copy_from(&o.map);
        gamma.view_mut((r, r), (n, n)).copy_from(&o.noise);
        y.rows_mut(r, n).copy_from(&signals.values[i]);
        r += n;
    }
    let innovation_cov = &a * &p * a.transpose() + gamma;
    let gain = &p * a.transpose() * innovation_cov.try_inverse().unwrap();
    let mean = &m0 + &gain * (y - &a * &m0);
    let cov = &p - &gain * &a * &p;
    (mean, (&cov + cov.transpose()) * 0.5)
}

pub fn alpha(lambda: f64) -> f64 {
    (1.0 / (1.0 + (-lambda).exp())).sqrt()
}

pub fn sigma(lambda: f64) -> f64 {
    (1.0 / (1.0 + lambda.exp())).sqrt()
}

/// Score of the noised marginal `z = αx + σε` for `x ~ N(m, S)`.
pub fn gaussian_score(z: &DVector<f64>, lambda: f64, m: &DVector<f64>, s: &DMatrix<f64>) -> DVector<f64> {
    let (a, sg) = (alpha(lambda), sigma(lambda));
    let d = z.len();
    let cov = s * (a * a) + DMatrix::identity(d, d) * (sg * sg);
    -cov.lu().solve(&(z - m * a)).unwrap()
}

/// v-prediction implied by a score: `ε = −σ·score`, `x̂ = (z − σε)/α`, `v = αε − σx̂`.
pub fn v_from_score(z: &DVector<f64>, lambda: f64, score: &DVector<f64>) -> DVector<f64> {
    let (a, sg) = (alpha(lambda), sigma(lambda));
    let eps = -score * sg;
    let x = (z - &eps * sg) / a;
    eps * a - x * sg
}

pub fn eps_from_v(z: &DVector<f64>, lambda: f64, v: &DVector<f64>) -> DVector<f64> {
    z * sigma(lambda) + v * alpha(lambda)
}

/// Guided combination in the additive form `f₀ + Σ wⱼ (fⱼ − fⱼ₋₁)` over nested prefixes.
pub fn additive_guidance(levels: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let mut out = levels[0].clone();
    for (j, w) in weights.iter().enumerate() {
        out += (&levels[j + 1] - &levels[j]) * *w;
    }
    out
}

/// Moments of the deterministic sampler's output, obtained by integrating the
/// guided probability-flow ODE for means and covariances with RK4.
///
/// With `y = z/α` and `u = ln(σ/α)`, each Gaussian level contributes
/// `dy/du = η²(Sⱼ + η²I)⁻¹(y − mⱼ)` where `η = eᵘ`. `coeffs[j]` multiplies level `j`.
/// `start` overrides the initial distribution of `y`.
pub fn rk4_moments(
    levels: &[(DVector<f64>, DMatrix<f64>)],
    coeffs: &[f64],
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
    start: Option<(DVector<f64>, DMatrix<f64>)>,
) -> (DVector<f64>, DMatrix<f64>) {
    let d = levels[0].0.len();
    let id = DMatrix::<f64>::identity(d, d);
    // dy/du = A(u) y + b(u)
    let field = |u: f64| -> (DMatrix<f64>, DVector<f64>) {
        let e2 = (2.0 * u).exp();
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for ((m, s), c) in levels.iter().zip(coeffs) {
            if *c == 0.0 {
                continue;
            }
            let inv = (s + &id * e2).try_inverse().unwrap() * (e2 * c);
            b -= &inv * m;
            a += inv;
        }
        (a, b)
    };
    let u0 = -lambda_min / 2.0;
    let u1 = -lambda_max / 2.0;
    // Default start: z ~ N(0, I) at λ_min, i.e. y ~ N(0, (1 + η²) I).
    let (mut mean, mut cov) = start.unwrap_or_else(|| (DVector::zeros(d), &id * (1.0 + (2.0 * u0).exp())));
    let h = (u1 - u0) / steps as f64;
    let deriv = |u: f64, m: &DVector<f64>, p: &DMatrix<f64>| {
        let (a, b) = field(u);
        (&a * m + b, &a * p + p * a.transpose())
    };
    for i in 0..steps {
        let u = u0 + h * i as f64;
        let (k1m, k1p) = deriv(u, &mean, &cov);
        let (k2m, k2p) = deriv(u + h / 2.0, &(&mean + &k1m * (h / 2.0)), &(&cov + &k1p * (h / 2.0)));
        let (k3m, k3p) = deriv(u + h / 2.0, &(&mean + &k2m * (h / 2.0)), &(&cov + &k2p * (h / 2.0)));
        let (k4m, k4p) = deriv(u + h, &(&mean + &k3m * h), &(&cov + &k3p * h));
        mean += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
        cov += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
    }
    // Final clean prediction x̂ = y − η ε̂ is affine in y.
    let (a, b) = field(u1);
    let map = &id - &a;
    let mean = &map * mean - b;
    let cov = &map * cov * map.transpose();
    (mean, (&cov + cov.transpose()) * 0.5)
}

/// Mean and unbiased covariance computed directly.
pub fn moments(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mut mean = DVector::zeros(d);
    for s in samples {
        mean += s;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    (mean, cov / (n - 1.0))
}

/// Whether `count` successes in `n` trials is within `k` binomial standard deviations of `p`.
pub fn within_binomial(count: usize, n: usize, p: f64, k: f64) -> bool {
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - n as f64 * p).abs() <= k * sd
}

/// SSIM evaluated window by window with explicit 2-D Gaussian weights.
pub fn ssim_brute(a: &Image, b: &Image, window: usize, sigma: f64, k1: f64, k2: f64) -> f64 {
    let r = (window / 2) as f64;
    let mut w = vec![vec![0.0; window]; window];
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - r, j as f64 - r);
            *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let c1 = k1 * k1;
    let c2 = k2 * k2;
    let mut acc = 0.0;
    for c in 0..a.channels() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for y0 in 0..=a.height() - window {
            for x0 in 0..=a.width() - window {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in w.iter().enumerate() {
                    for (j, wt) in row.iter().enumerate() {
                        let wt = wt / total;
                        let pa = a.get(x0 + j, y0 + i, c);
                        let pb = b.get(x0 + j, y0 + i, c);
                        ma += wt * pa;
                        mb += wt * pb;
                        saa += wt * pa * pa;
                        sbb += wt * pb * pb;
                        sab += wt * pa * pb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        acc += sum / count as f64;
    }
    acc / a.channels() as f64
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    while (hi - lo).abs() > tol {
        if f(c) < f(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - g * (hi - lo);
        d = lo + g * (hi - lo);
    }
    (lo + hi) / 2.0
}

pub fn random_image<R: Rng>(rng: &mut R, w: usize, h: usize, c: usize) -> Image {
    Image::new(w, h, c, (0..w * h * c).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// A metric scene and its SfM reconstruction, which is the metric scene scaled by `1/scale`.
pub struct CalibScene {
    pub scale: f64,
    pub rig: Rig,
    pub sfm_poses: Vec<Pose>,
    pub sfm_points: Vec<nvs4d_core::calibrate::SparsePoint>,
    pub depths: Vec<nvs4d_core::calibrate::DepthMap>,
}

/// Renders sparse metric depth maps: each point writes its depth at the pixel
/// containing its projection; pixels hit twice are left invalid.
///
/// `noise` is the relative std of multiplicative depth noise; a fraction
/// `outliers` of samples is multiplied by `10^±[0.5, 1]`.
pub fn calib_scene<R: Rng>(rng: &mut R, scale: f64, frames: usize, points: usize, noise: f64, outliers: f64) -> CalibScene {
    let rig = Rig::new(rng, frames, points);
    let k = rig.k;
    let depths = rig
        .poses
        .iter()
        .map(|pose| {
            let (w, h) = (k.width as usize, k.height as usize);
            let mut values = vec![0.0; w * h];
            let mut hits = vec![0u32; w * h];
            for x in &rig.points {
                let pc = pose.parent_to_camera(x);
                let u = (k.fx * pc.x / pc.z + k.cx).floor() as usize;
                let v = (k.fy * pc.y / pc.z + k.cy).floor() as usize;
                let i = v * w + u;
                let mut d = pc.z * (1.0 + noise * normal(rng));
                if rng.random::<f64>() < outliers {
                    let decades = rng.random_range(0.5..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                    d *= 10f64.powf(decades);
                }
                values[i] = d;
                hits[i] += 1;
            }
            for (v, n) in values.iter_mut().zip(&hits) {
                if *n > 1 {
                    *v = 0.0;
                }
            }
            nvs4d_core::calibrate::DepthMap::from_values(w, h, values).unwrap()
        })
        .collect();
    let sfm_poses = rig.poses.iter().map(|p| p.scaled(1.0 / scale)).collect();
    let sfm_points = rig
        .points
        .iter()
        .map(|x| nvs4d_core::calibrate::SparsePoint { xyz: x / scale, track: (0..frames).collect() })
        .collect();
    CalibScene { scale, rig, sfm_poses, sfm_points, depths }
}

impl CalibScene {
    pub fn frame_outcomes(&self) -> Vec<nvs4d_core::calibrate::FrameOutcome> {
        self.sfm_poses
            .iter()
            .zip(&self.depths)
            .map(|(pose, depth)| nvs4d_core::calibrate::frame_scale(&self.sfm_points, depth, &self.rig.k, pose, 5).unwrap())
            .collect()
    }
}
