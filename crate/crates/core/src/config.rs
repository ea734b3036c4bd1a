//! Run configuration: a TOML file of `[section]` tables with `key = value`
//! lines. Every key is optional and falls back to the documented default;
//! unknown keys are rejected. Relative paths resolve against the directory
//! holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{SplitFractions, TripletMap};
use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, ArchConfig};
use crate::structsim::{DamageSpec, ExcitationSpec, ShearModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker cap for element jobs; absent means all hardware threads.
    pub jobs: Option<usize>,
    pub paths: PathsConfig,
    pub structure: StructureConfig,
    pub excitation: ExcitationConfig,
    pub scenarios: ScenarioConfig,
    pub triplets: TripletConfig,
    pub split: SplitFractions,
    pub evaluation: EvaluationConfig,
    pub network: ArchConfig,
    pub training: TrainingConfig,
    pub noise: NoiseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            jobs: None,
            paths: PathsConfig::default(),
            structure: StructureConfig::default(),
            excitation: ExcitationConfig::default(),
            scenarios: ScenarioConfig::default(),
            triplets: TripletConfig::default(),
            split: SplitFractions::default(),
            evaluation: EvaluationConfig::default(),
            network: ArchConfig::default(),
            training: TrainingConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data_dir: "data".into(),
            checkpoint_dir: "checkpoints".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureConfig {
    pub n_dof: usize,
    /// kg per floor.
    pub mass: f64,
    /// N/m per story.
    pub stiffness: f64,
    /// Rayleigh anchor ratios at the lowest and highest mode.
    pub damping: [f64; 2],
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            n_dof: 10,
            mass: 1.0,
            stiffness: 4.0e5,
            damping: [0.02, 0.02],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationConfig {
    pub fs: f64,
    pub duration: f64,
    pub noise_std: f64,
    pub substeps: usize,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        ExcitationConfig {
            fs: 1024.0,
            duration: 256.0,
            noise_std: 1.0,
            substeps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Stiffness reduction applied to every damaged element.
    pub reduction: f64,
    /// Damaged elements per scenario; an empty list is the intact structure.
    pub damaged: Vec<Vec<usize>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut damaged: Vec<Vec<usize>> = (0..10).map(|i| vec![i]).collect();
        damaged.push(vec![1, 6]);
        damaged.push(vec![3, 8]);
        damaged.push(vec![]);
        ScenarioConfig {
            reduction: 0.2,
            damaged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletLayout {
    /// `i, i-1, i+1`, clamped at the ends of the floor chain.
    Chain,
    /// The ten-joint grandstand table (30 channels).
    Qugs,
    /// The `map` key lists one channel triple per element.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletConfig {
    pub layout: TripletLayout,
    pub map: Vec<[usize; 3]>,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            layout: TripletLayout::Chain,
            map: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Leading fraction of each round-B recording used as held-out test data.
    pub heldout_fraction: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            heldout_fraction: 0.125,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// SNR levels of the robustness rounds.
    pub levels_db: Vec<f64>,
    /// Measurement noise added to the training round before framing.
    pub train_snr_db: Option<f64>,
    /// Measurement noise added before evaluation.
    pub eval_snr_db: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            levels_db: vec![30.0, 20.0, 10.0],
            train_snr_db: None,
            eval_snr_db: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving relative paths against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.paths.data_dir,
            &mut self.paths.checkpoint_dir,
            &mut self.paths.report_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Error::Config(m);
        self.model()
            .validate()
            .map_err(|e| cfg_err(e.to_string()))?;
        self.excitation_spec(0)
            .samples()
            .map_err(|e| cfg_err(e.to_string()))?;
        if self.scenarios.damaged.is_empty() {
            return Err(cfg_err("scenario list is empty".into()));
        }
        if !(self.scenarios.reduction > 0.0 && self.scenarios.reduction < 1.0) {
            return Err(cfg_err(format!(
                "damage reduction {} outside (0, 1)",
                self.scenarios.reduction
            )));
        }
        for (s, d) in self.scenarios.damaged.iter().enumerate() {
            if let Some(e) = d.iter().find(|&&e| e >= self.structure.n_dof) {
                return Err(cfg_err(format!(
                    "scenario {s} damages element {e}, structure has {}",
                    self.structure.n_dof
                )));
            }
        }
        let map = self.triplet_map()?;
        map.validate_channels(self.structure.n_dof)?;
        for i in 0..map.len() {
            let hit = self
                .scenarios
                .damaged
                .iter()
                .filter(|d| d.contains(&i))
                .count();
            if hit == 0 {
                return Err(cfg_err(format!(
                    "no scenario damages monitored element {i}"
                )));
            }
            if hit == self.scenarios.damaged.len() {
                return Err(cfg_err(format!("every scenario damages element {i}")));
            }
        }
        self.split.validate().map_err(|e| cfg_err(e.to_string()))?;
        let h = self.evaluation.heldout_fraction;
        if !(h > 0.0 && h <= 1.0) {
            return Err(cfg_err(format!("heldout_fraction {h} outside (0, 1]")));
        }
        for snr in self
            .noise
            .levels_db
            .iter()
            .chain(&self.noise.train_snr_db)
            .chain(&self.noise.eval_snr_db)
        {
            if snr.is_nan() {
                return Err(cfg_err("SNR is NaN".into()));
            }
        }
        if self.jobs == Some(0) {
            return Err(cfg_err("jobs must be >= 1".into()));
        }
        self.ensemble().validate()
    }

    pub fn model(&self) -> ShearModel {
        let s = &self.structure;
        ShearModel {
            masses: vec![s.mass; s.n_dof],
            stiffnesses: vec![s.stiffness; s.n_dof],
            damping_ratios: s.damping,
        }
    }

    pub fn damage(&self, scenario: usize) -> DamageSpec {
        DamageSpec::uniform(&self.scenarios.damaged[scenario], self.scenarios.reduction)
    }

    pub fn excitation_spec(&self, seed: u64) -> ExcitationSpec {
        let e = &self.excitation;
        ExcitationSpec {
            fs: e.fs,
            duration: e.duration,
            noise_std: e.noise_std,
            seed,
            substeps: e.substeps,
        }
    }

    pub fn triplet_map(&self) -> Result<TripletMap> {
        match self.triplets.layout {
            TripletLayout::Chain => TripletMap::chain(self.structure.n_dof),
            TripletLayout::Qugs => Ok(TripletMap::qugs()),
            TripletLayout::Explicit => TripletMap::new(self.triplets.map.clone()),
        }
    }

    pub fn num_elements(&self) -> usize {
        self.triplet_map().map_or(0, |m| m.len())
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            num_elements: self.num_elements(),
            arch: self.network.clone(),
            adam: self.training.adam,
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            seed: self.seed,
        }
    }
}
