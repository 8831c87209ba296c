use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationConfig, SynthProfile};
use crate::detect::DetectorConfig;
use crate::error::{Error, Result};
use crate::fedsim::{FlConfig, Strategy};
use crate::nn::{ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Generate,
    /// Panel CSV with optional label CSV and cell metadata JSON.
    Csv {
        panel: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default)]
        cells: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub source: DataSource,
    pub n_cells: usize,
    /// Counters per cell.
    pub signals: usize,
    /// Time steps.
    pub length: usize,
    pub seed: u64,
    /// Execution graph JSON; a forward DAG over the signals when absent.
    pub sw_graph: Option<PathBuf>,
    pub sw_fanout: usize,
    pub profile: SynthProfile,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Generate,
            n_cells: 67,
            signals: 10,
            length: 3072,
            seed: 0,
            sw_graph: None,
            sw_fanout: 2,
            profile: SynthProfile::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationSection {
    /// 0 = untouched, 1 = faults without propagation, 2 = with propagation.
    pub dataset: u8,
    /// Replaces the preset of a dataset id.
    pub overrides: BTreeMap<u8, AnnotationConfig>,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        Self {
            dataset: 1,
            overrides: BTreeMap::new(),
        }
    }
}

impl AnnotationSection {
    pub fn config(&self) -> Result<AnnotationConfig> {
        match self.overrides.get(&self.dataset) {
            Some(c) => Ok(c.clone()),
            None => AnnotationConfig::dataset(self.dataset),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Step between training window starts.
    pub train_stride: usize,
    /// Also train the model without execution-graph edges.
    pub baseline: bool,
    /// Train on the leading part of the series and evaluate on the rest.
    pub holdout: bool,
    pub holdout_frac: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            train_stride: 1,
            baseline: false,
            holdout: false,
            holdout_frac: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectSection {
    pub detector: DetectorConfig,
    /// Choose z-score or ESD per signal from the labels when the detector
    /// has no method map.
    pub calibrate: bool,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            calibrate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlSection {
    pub strategies: Vec<Strategy>,
    /// Round counts; local epochs are `epoch_budget / rounds`.
    pub schedules: Vec<usize>,
    pub epoch_budget: usize,
    pub seed: u64,
    pub sim_clamp: bool,
    pub mp_steps: usize,
}

impl Default for FlSection {
    fn default() -> Self {
        Self {
            strategies: vec![
                Strategy::Fedavg,
                Strategy::FedavgReg { lambda: 0.01 },
                Strategy::Fedgraph,
                Strategy::FedgraphReg { lambda: 0.01 },
            ],
            schedules: vec![5, 10, 20],
            epoch_budget: 100,
            seed: 0,
            sim_clamp: true,
            mp_steps: 1,
        }
    }
}

impl FlSection {
    /// Every (strategy, schedule) pair as a run configuration.
    pub fn runs(&self) -> Result<Vec<FlConfig>> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &rounds in &self.schedules {
                if rounds == 0 || !self.epoch_budget.is_multiple_of(rounds) {
                    return Err(Error::Config(format!(
                        "epoch budget {} does not split into {rounds} rounds",
                        self.epoch_budget
                    )));
                }
                let cfg = FlConfig {
                    strategy,
                    rounds,
                    local_epochs: self.epoch_budget / rounds,
                    seed: self.seed,
                    sim_clamp: self.sim_clamp,
                    mp_steps: self.mp_steps,
                    record_weights: false,
                };
                cfg.validate()?;
                out.push(cfg);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub annotation: AnnotationSection,
    pub model: ModelSection,
    pub detect: DetectSection,
    pub fl: Option<FlSection>,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSection::default(),
            annotation: AnnotationSection::default(),
            model: ModelSection::default(),
            detect: DetectSection::default(),
            fl: None,
            output: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets every seed in the config.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.data.seed = seed;
        self.model.train.seed = seed;
        if let Some(fl) = &mut self.fl {
            fl.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if matches!(d.source, DataSource::Generate)
            && (d.n_cells == 0 || d.signals == 0 || d.length == 0)
        {
            return Err(Error::Config(
                "n_cells, signals and length must be positive".into(),
            ));
        }
        if let DataSource::Csv {
            panel,
            labels,
            cells,
        } = &d.source
        {
            for p in std::iter::once(panel).chain(labels).chain(cells) {
                if !p.exists() {
                    return Err(Error::Config(format!("{} does not exist", p.display())));
                }
            }
        }
        if let Some(p) = &d.sw_graph {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        self.annotation.config()?.validate()?;
        self.model.model.validate()?;
        self.model.train.validate()?;
        if self.model.train_stride == 0 {
            return Err(Error::Config("train_stride must be positive".into()));
        }
        if !(self.model.holdout_frac > 0.0 && self.model.holdout_frac < 1.0) {
            return Err(Error::Config("holdout_frac must lie in (0, 1)".into()));
        }
        self.detect.detector.validate()?;
        if let Some(fl) = &self.fl {
            fl.runs()?;
        }
        Ok(())
    }
}
