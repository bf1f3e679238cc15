//! Training-data mixture: dataset descriptors and the per-example sampler.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{IngestError, Result};

pub const DEFAULT_VIDEO_PROB: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    UnposedVideo,
    #[serde(rename = "posed_3d")]
    Posed3D,
    #[serde(rename = "posed_4d")]
    Posed4D,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::UnposedVideo => "unposed_video",
            DatasetKind::Posed3D => "posed_3d",
            DatasetKind::Posed4D => "posed_4d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub kind: DatasetKind,
    pub scene_count: usize,
    /// Consecutive timesteps per example; 4D datasets only.
    #[serde(default)]
    pub window: Option<usize>,
    /// Timesteps available in each scene; defaults to `window`.
    #[serde(default)]
    pub scene_length: Option<usize>,
}

impl DatasetDescriptor {
    pub fn new(name: &str, kind: DatasetKind, scene_count: usize, window: Option<usize>) -> Result<Self> {
        let d = Self { name: name.to_string(), kind, scene_count, window, scene_length: None };
        d.validate()?;
        Ok(d)
    }

    pub fn with_scene_length(mut self, len: usize) -> Result<Self> {
        self.scene_length = Some(len);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IngestError::Config(format!("dataset {:?}: {msg}", self.name)));
        if self.scene_count == 0 {
            return bad("scene_count must be at least 1".into());
        }
        match (self.kind, self.window) {
            (DatasetKind::Posed4D, None) => return bad("4D datasets need a window".into()),
            (DatasetKind::Posed4D, Some(0)) => return bad("window must be positive".into()),
            (DatasetKind::Posed4D, Some(k)) => {
                if let Some(len) = self.scene_length {
                    if len < k {
                        return bad(format!("scene_length {len} shorter than window {k}"));
                    }
                }
            }
            (_, Some(_)) => return bad("only 4D datasets take a window".into()),
            (_, None) => {}
        }
        if self.kind != DatasetKind::Posed4D && self.scene_length.is_some() {
            return bad("only 4D datasets take a scene_length".into());
        }
        Ok(())
    }

    pub fn is_posed(&self) -> bool {
        self.kind != DatasetKind::UnposedVideo
    }
}

/// Window length used for a given number of views per example.
pub fn window_for_views(views: usize) -> Option<usize> {
    match views {
        8 => Some(5),
        32 => Some(20),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimeWindow {
    pub start: usize,
    pub len: usize,
}

impl TimeWindow {
    pub fn timesteps(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MixtureDraw {
    pub dataset: usize,
    pub scene: usize,
    pub window: Option<TimeWindow>,
}

/// Validated mixture, ready to sample.
#[derive(Debug, Clone)]
pub struct Mixture {
    datasets: Vec<DatasetDescriptor>,
    video_prob: f64,
    videos: Vec<usize>,
    posed: Vec<usize>,
    posed_weights: Option<WeightedIndex<usize>>,
}

impl Mixture {
    pub fn new(datasets: Vec<DatasetDescriptor>, video_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&video_prob) {
            return Err(IngestError::Config(format!("video_prob {video_prob} outside [0, 1]")));
        }
        for d in &datasets {
            d.validate()?;
        }
        let videos: Vec<usize> = (0..datasets.len()).filter(|&i| !datasets[i].is_posed()).collect();
        let posed: Vec<usize> = (0..datasets.len()).filter(|&i| datasets[i].is_posed()).collect();
        if video_prob > 0.0 && videos.is_empty() {
            return Err(IngestError::Config("video_prob > 0 but no unposed video dataset".into()));
        }
        if video_prob < 1.0 && posed.is_empty() {
            return Err(IngestError::Config("video_prob < 1 but no posed dataset".into()));
        }
        let posed_weights = if posed.is_empty() {
            None
        } else {
            Some(
                WeightedIndex::new(posed.iter().map(|&i| datasets[i].scene_count))
                    .map_err(|e| IngestError::Config(e.to_string()))?,
            )
        };
        Ok(Self { datasets, video_prob, videos, posed, posed_weights })
    }

    pub fn datasets(&self) -> &[DatasetDescriptor] {
        &self.datasets
    }

    pub fn video_prob(&self) -> f64 {
        self.video_prob
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MixtureDraw {
        let video = rng.random::<f64>() < self.video_prob;
        let dataset = match (&self.posed_weights, video) {
            (Some(w), false) => self.posed[w.sample(rng)],
            _ => self.videos[rng.random_range(0..self.videos.len())],
        };
        let d = &self.datasets[dataset];
        let scene = rng.random_range(0..d.scene_count);
        let window = d.window.map(|k| {
            let len = d.scene_length.unwrap_or(k);
            TimeWindow { start: rng.random_range(0..=len - k), len: k }
        });
        MixtureDraw { dataset, scene, window }
    }
}

/// One draw from a freshly validated mixture.
pub fn mixture_sample<R: Rng + ?Sized>(datasets: &[DatasetDescriptor], video_prob: f64, rng: &mut R) -> Result<MixtureDraw> {
    Ok(Mixture::new(datasets.to_vec(), video_prob)?.sample(rng))
}
