//! Run configuration file and its resolution against flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ForgeConfig, Task};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_BINS;
use crate::model::{LoraSpec, ModelConfig};
use crate::train::{stage_schedule, AdamParams, DatasetSpec, LrPreset, StageConfig, StepId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub forge: ForgeConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            forge: ForgeConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub preset: LrPreset,
    pub stages: Vec<StepId>,
    /// Replaces every dataset budget of every stage.
    pub budget: Option<usize>,
    /// Per-stage overrides keyed by step id ("1" .. "4", "MFT").
    pub overrides: BTreeMap<String, StageOverride>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            preset: LrPreset::default(),
            stages: vec![StepId::S1, StepId::S2, StepId::S3, StepId::S4],
            budget: None,
            overrides: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageOverride {
    pub datasets: Option<Vec<DatasetSpec>>,
    pub unlocked: Option<Vec<String>>,
    pub lora: Option<LoraSpec>,
    pub lr: Option<f64>,
    pub warmup_ratio: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub max_tiles: Option<u32>,
    pub adam: Option<AdamParams>,
    pub steps: Option<usize>,
    pub budget: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub bins: Vec<f64>,
    pub bin_threshold: f64,
    pub max_tiles: Option<u32>,
    /// Empty means every task.
    pub tasks: Vec<Task>,
    /// Cap on evaluated samples per task.
    pub limit: Option<usize>,
    /// Freshly generated scenes for embedding export when no data directory is given.
    pub embed_screens: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS.to_vec(),
            bin_threshold: 0.5,
            max_tiles: None,
            tasks: Vec::new(),
            limit: None,
            embed_screens: 8,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(p) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {}", e.message())))
    }

    /// Stage configurations after applying the global budget and per-stage overrides.
    pub fn stages(&self) -> Result<Vec<StageConfig>> {
        for key in self.train.overrides.keys() {
            let step: StepId = key.parse()?;
            if !self.train.stages.contains(&step) {
                return Err(Error::Config(format!("override for stage {} which is not scheduled", key)));
            }
        }
        let mut out = Vec::new();
        for &step in &self.train.stages {
            let mut c = stage_schedule(step, self.train.preset);
            if let Some(b) = self.train.budget {
                c.datasets.iter_mut().for_each(|d| d.budget = b);
            }
            let ov = self
                .train
                .overrides
                .iter()
                .find(|(k, _)| k.parse::<StepId>().ok() == Some(step))
                .map(|(_, v)| v.clone())
                .unwrap_or_default();
            if let Some(d) = ov.datasets {
                c.datasets = d;
            }
            if let Some(b) = ov.budget {
                c.datasets.iter_mut().for_each(|d| d.budget = b);
            }
            if let Some(u) = ov.unlocked {
                c.unlocked = u;
            }
            if ov.lora.is_some() {
                c.lora = ov.lora;
            }
            c.lr = ov.lr.unwrap_or(c.lr);
            c.warmup_ratio = ov.warmup_ratio.unwrap_or(c.warmup_ratio);
            c.weight_decay = ov.weight_decay.unwrap_or(c.weight_decay);
            c.epochs = ov.epochs.unwrap_or(c.epochs);
            c.batch = ov.batch.unwrap_or(c.batch);
            c.max_tiles = ov.max_tiles.unwrap_or(c.max_tiles);
            c.adam = ov.adam.unwrap_or(c.adam);
            c.steps = ov.steps.or(c.steps);
            c.validate()?;
            out.push(c);
        }
        Ok(out)
    }
}
