//! Run configuration read from TOML.
//!
//! ```toml
//! seed = 42
//! output_dir = "run"
//! lag_schedule = "weekly-and-recent"   # or "recent-only"
//!
//! [data]
//! accidents = "data/accidents.csv"
//! context = "data/context.csv"
//! trips = "data/trips.csv"
//!
//! [grid]    # bounding box and cell counts, row 0 at min_lat
//! [split]   # train / val / test fractions
//! [model]   # transformer shape
//! [train]   # optimiser and loss weights
//! [synth]   # synthetic world used by gen-synth
//! ```
//!
//! Relative paths are resolved against the directory holding the config file
//! and kept in absolute form, so checkpoints can find their data later.
//! Every section may be omitted; missing keys take the defaults printed by
//! `cvit --print-default-config`. The top-level `seed` drives model
//! initialisation, batch shuffling and synthetic generation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, LagSchedule, SplitSpec};
use crate::model::ModelConfig;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub accidents: PathBuf,
    pub context: PathBuf,
    pub trips: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            accidents: "data/accidents.csv".into(),
            context: "data/context.csv".into(),
            trips: "data/trips.csv".into(),
        }
    }
}

impl DataPaths {
    pub const ACCIDENTS_FILE: &'static str = "accidents.csv";
    pub const CONTEXT_FILE: &'static str = "context.csv";
    pub const TRIPS_FILE: &'static str = "trips.csv";

    /// The three files as written by `gen-synth` into `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            accidents: dir.join(Self::ACCIDENTS_FILE),
            context: dir.join(Self::CONTEXT_FILE),
            trips: dir.join(Self::TRIPS_FILE),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub lag_schedule: LagSchedule,
    pub data: DataPaths,
    pub grid: GridSpec,
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: "run".into(),
            lag_schedule: LagSchedule::default(),
            data: DataPaths::default(),
            grid: GridSpec::default(),
            split: SplitSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
        config.resolve_paths(base.parent().unwrap_or(Path::new("/")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.output_dir,
            &mut self.data.accidents,
            &mut self.data.context,
            &mut self.data.trips,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Train config with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Synthetic world config on this run's grid and seed.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            grid: self.grid.clone(),
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    /// Every problem in the config except missing data files.
    pub fn validate(&self) -> Vec<String> {
        let mut p = self.grid.validate();
        p.extend(self.split.validate());
        p.extend(self.model.validate());
        p.extend(self.train.validate());
        if self.model.rows != self.grid.rows || self.model.cols != self.grid.cols {
            p.push(format!(
                "model grid {}x{} differs from data grid {}x{}",
                self.model.rows, self.model.cols, self.grid.rows, self.grid.cols
            ));
        }
        if self.model.history_len != crate::grid::HISTORY_LEN {
            p.push(format!(
                "model.history_len must be {} to match the lag schedule, got {}",
                crate::grid::HISTORY_LEN,
                self.model.history_len
            ));
        }
        if self.model.context_dim != crate::context::CONTEXT_DIM {
            p.push(format!(
                "model.context_dim must be {}, got {}",
                crate::context::CONTEXT_DIM,
                self.model.context_dim
            ));
        }
        p
    }

    /// `validate` plus a check that the data files exist.
    pub fn validate_for_training(&self) -> Vec<String> {
        let mut p = self.validate();
        for (name, path) in [
            ("accidents", &self.data.accidents),
            ("context", &self.data.context),
            ("trips", &self.data.trips),
        ] {
            if !path.is_file() {
                p.push(format!("data.{name} file {} does not exist", path.display()));
            }
        }
        p
    }

    pub fn ensure_valid(problems: Vec<String>) -> Result<()> {
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}
