//! Run configuration: one TOML file per invocation, overridden by flags.

use std::path::{Path, PathBuf};

use nvs4d_core::diffusion::guidance::Signal;
use nvs4d_core::diffusion::sampler::SamplerKind;
use nvs4d_core::ingest::mixture::{DatasetDescriptor, DEFAULT_VIDEO_PROB};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEED_ENV: &str = "NVS4D_SEED";

/// Bad or incomplete configuration. Maps to exit code 1.
#[derive(Debug, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    pub toy: Option<ToySection>,
    pub sweep: Option<SweepSection>,
    pub mixture: Option<MixtureSection>,
    #[serde(default)]
    pub scenes: Vec<SceneManifest>,
}

/// Inputs for one scene. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub id: String,
    /// COLMAP text model of the target cameras.
    pub colmap: Option<PathBuf>,
    /// Generated views, one file per frame, sorted by name.
    pub images: Option<PathBuf>,
    /// Real views aligned with `images`.
    pub ground_truth: Option<PathBuf>,
    /// Metric depth maps named after each image's file stem (`.f32` or `.pgm`).
    pub depths: Option<PathBuf>,
    /// Keypoint matches between generated views.
    pub matches: Option<PathBuf>,
    /// Keypoint matches between real views.
    pub real_matches: Option<PathBuf>,
    /// COLMAP model of the target trajectory.
    pub reference: Option<PathBuf>,
    /// COLMAP model re-estimated from generated views.
    pub predicted: Option<PathBuf>,
    /// COLMAP model re-estimated from real views.
    pub real_predicted: Option<PathBuf>,
    #[serde(default)]
    pub conditioning: Vec<usize>,
}

impl SceneManifest {
    /// First conditioning frame, or 0.
    pub fn anchor(&self) -> usize {
        self.conditioning.first().copied().unwrap_or(0)
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.colmap,
            &mut self.images,
            &mut self.ground_truth,
            &mut self.depths,
            &mut self.matches,
            &mut self.real_matches,
            &mut self.reference,
            &mut self.predicted,
            &mut self.real_predicted,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub out_dir: Option<PathBuf>,
    pub discard_fraction: f64,
    pub min_points: usize,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            out_dir: None,
            discard_fraction: nvs4d_core::calibrate::DEFAULT_DISCARD_FRACTION,
            min_points: nvs4d_core::calibrate::DEFAULT_MIN_POINTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Tsed,
    Sfmd,
    Kd,
    PsnrSsim,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub which: Vec<MetricKind>,
    pub out: Option<PathBuf>,
    pub tsed_threshold: f64,
    pub min_matches: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let tsed = nvs4d_core::epipolar::TsedConfig::default();
        Self {
            which: vec![MetricKind::Tsed, MetricKind::Sfmd, MetricKind::Kd, MetricKind::PsnrSsim],
            out: None,
            tsed_threshold: tsed.threshold,
            min_matches: tsed.min_matches,
        }
    }
}

/// Gaussian toy world and sampler settings shared by `toy-sample` and `sweep`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Seeds the toy world and its observed signals.
    #[serde(default = "default_world_seed")]
    pub world_seed: u64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_kind")]
    pub sampler: SamplerKind,
}

fn default_dim() -> usize {
    6
}
fn default_world_seed() -> u64 {
    1
}
fn default_steps() -> usize {
    256
}
fn default_samples() -> usize {
    20_000
}
fn default_kind() -> SamplerKind {
    SamplerKind::Deterministic
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    #[serde(flatten)]
    pub world: WorldSection,
    #[serde(default = "unit_weights")]
    pub weights: Vec<f64>,
    pub out: Option<PathBuf>,
    pub samples_out: Option<PathBuf>,
}

fn unit_weights() -> Vec<f64> {
    vec![1.0; 3]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(flatten)]
    pub world: WorldSection,
    pub stage1: Vec<f64>,
    #[serde(default)]
    pub stage2: Vec<f64>,
    #[serde(default = "default_vary")]
    pub vary: Signal,
    pub out: Option<PathBuf>,
}

fn default_vary() -> Signal {
    Signal::Poses
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    #[serde(default = "default_video_prob")]
    pub video_prob: f64,
    #[serde(default = "default_draws")]
    pub draws: usize,
    pub out: Option<PathBuf>,
    pub datasets: Vec<DatasetDescriptor>,
}

fn default_video_prob() -> f64 {
    DEFAULT_VIDEO_PROB
}
fn default_draws() -> usize {
    100_000
}

impl Config {
    /// Parses `path` and resolves every relative path against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for scene in &mut cfg.scenes {
            scene.resolve(base);
        }
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        resolve(&mut cfg.calibrate.out_dir);
        resolve(&mut cfg.metrics.out);
        if let Some(t) = &mut cfg.toy {
            resolve(&mut t.out);
            resolve(&mut t.samples_out);
        }
        if let Some(s) = &mut cfg.sweep {
            resolve(&mut s.out);
        }
        if let Some(m) = &mut cfg.mixture {
            resolve(&mut m.out);
        }
        Ok(cfg)
    }

    pub fn require_scenes(&self) -> anyhow::Result<()> {
        if self.scenes.is_empty() {
            return Err(config_error("manifest lists no scenes"));
        }
        let mut ids: Vec<&str> = self.scenes.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(config_error(format!("duplicate scene id {:?}", w[0])));
        }
        Ok(())
    }
}

/// Flag, then config file, then `NVS4D_SEED`.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| config_error(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Err(config_error(format!("no seed given: pass --seed, set `seed` in the config, or set {SEED_ENV}"))),
    }
}
