//! Run configuration: one JSON document covering every stage.

use std::path::{Path, PathBuf};

use ckmflow::baselines::{DdpmConfig, Method, DEFAULT_K};
use ckmflow::conditioning::DegradationConfig;
use ckmflow::flow_engine::{ConditionConfig, InferenceConfig, MaskMode, TrainConfig};
use ckmflow::scene_sim::{GenerateConfig, PropagationParams, SceneConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    /// Pixel distance between a covariance target and its ring neighbors.
    pub ring_spacing: usize,
    pub max_scene_attempts: usize,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        let g = GenerateConfig::default();
        Self {
            ring_spacing: g.ring_spacing,
            max_scene_attempts: g.max_scene_attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSettings {
    pub base_width: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
}

impl Default for NetSettings {
    fn default() -> Self {
        Self {
            base_width: 16,
            depth: 2,
            time_embed_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    /// Neighbors used by the gain-map KNN baseline.
    pub knn_k: usize,
    /// Fill the time column of metric CSVs (makes them run-dependent).
    pub timing: bool,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self {
            knn_k: DEFAULT_K,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub methods: Vec<Method>,
    /// Records generated when no dataset is given.
    pub records: usize,
    /// Samples timed for the latency columns (after two warm-up samples).
    pub timing_samples: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            records: 200,
            timing_samples: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub scene: SceneConfig,
    pub propagation: PropagationParams,
    pub dataset: DatasetSettings,
    pub degradation: DegradationConfig,
    pub mask: MaskMode,
    pub net: NetSettings,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub ddpm: DdpmConfig,
    pub metrics: MetricsSettings,
    pub bench: BenchSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: None,
            scene: SceneConfig::default(),
            propagation: PropagationParams::default(),
            dataset: DatasetSettings::default(),
            degradation: DegradationConfig::default(),
            mask: MaskMode::default(),
            net: NetSettings::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            ddpm: DdpmConfig::default(),
            metrics: MetricsSettings::default(),
            bench: BenchSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// A global seed replaces every stage seed.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.inference.seed = seed;
        self.ddpm.seed = seed;
    }

    pub fn generate_config(&self) -> GenerateConfig {
        GenerateConfig {
            scene: self.scene.clone(),
            propagation: self.propagation.clone(),
            ring_spacing: self.dataset.ring_spacing,
            max_scene_attempts: self.dataset.max_scene_attempts,
        }
    }

    pub fn condition_config(&self) -> ConditionConfig {
        ConditionConfig {
            degradation: self.degradation.clone(),
            mask: self.mask,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
