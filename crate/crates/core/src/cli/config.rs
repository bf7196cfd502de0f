use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenesim::SimConfig;
use crate::trainer::{ModelConfig, TrainConfig};

/// Mixed into the model seed so the initial weights do not reuse the
/// simulation stream when both come from one experiment seed.
const MODEL_SEED_SALT: u64 = 0x6d6f_6465_6c00_0001;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Sampled target / non-target pairs; all pairs when both are unset.
    pub n_target: Option<usize>,
    pub n_nontarget: Option<usize>,
    /// Channel counts for the test-scenario sweep, e.g. `[8, 16, 32, 40]`.
    pub channels: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub trials: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Overrides the seeds of the simulation, model and training sections.
    pub seed: Option<u64>,
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the seed override (command line first, then the config's own)
    /// and validates every section.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.sim.seed = s;
            self.train.seed = s;
            self.model.seed = s ^ MODEL_SEED_SALT;
        }
        self.sim.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.d != self.sim.d {
            return Err(Error::Config(format!("model.d={} but sim.d={}", self.model.d, self.sim.d)));
        }
        if self.eval.channels.contains(&0) {
            return Err(Error::Config("eval.channels entries must be positive".into()));
        }
        if self.eval.n_target.is_some() != self.eval.n_nontarget.is_some() {
            return Err(Error::Config("eval.n_target and eval.n_nontarget must be set together".into()));
        }
        Ok(self)
    }
}
