//! Checkpoint files.
//!
//! A checkpoint is one JSON object:
//!
//! ```json
//! {
//!   "format": "cvit-checkpoint",
//!   "version": 1,
//!   "model": { "rows": 20, "cols": 20, ... },
//!   "norm_stats": { "risk": { "mean": 0.1, "std": 0.7 }, ... },
//!   "best_epoch": 37,
//!   "run": { ... } | null,
//!   "params": [ { "name": "patch_embed.weight", "shape": [175, 64], "data": [ ... ] }, ... ]
//! }
//! ```
//!
//! Parameters appear in `Params::named` order, each stored row-major as 64-bit
//! floats. Numbers are written in shortest round-trip form and parsed exactly,
//! so save followed by load reproduces every bit. `run` holds the resolved run
//! configuration used for training, which lets `eval` and `predict` find the
//! data without a separate config file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::NormStats;
use crate::model::{CvitModel, ModelConfig};
use crate::tensor::Tensor;

pub const FORMAT: &str = "cvit-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: ModelConfig,
    norm_stats: NormStats,
    best_epoch: usize,
    run: Option<RunConfig>,
    params: Vec<NamedArray>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: CvitModel,
    pub norm_stats: NormStats,
    pub best_epoch: usize,
    pub run: Option<RunConfig>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let mut params = Vec::new();
        for (name, t) in self.model.params.named() {
            if t.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("parameter {name} holds non-finite values")));
            }
            params.push(NamedArray {
                name,
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            });
        }
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: VERSION,
            model: self.model.config().clone(),
            norm_stats: self.norm_stats,
            best_epoch: self.best_epoch,
            run: self.run.clone(),
            params,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::CheckpointMismatch(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        let mut params = CvitModel::empty_params(&file.model)?;
        let slots = params.named_mut();
        if slots.len() != file.params.len() {
            return Err(Error::CheckpointMismatch(format!(
                "expected {} parameter arrays, found {}",
                slots.len(),
                file.params.len()
            )));
        }
        for ((name, slot), stored) in slots.into_iter().zip(file.params) {
            if name != stored.name || slot.shape() != stored.shape.as_slice() {
                return Err(Error::CheckpointMismatch(format!(
                    "expected {name} {:?}, found {} {:?}",
                    slot.shape(),
                    stored.name,
                    stored.shape
                )));
            }
            *slot = Tensor::new(stored.shape, stored.data)?;
        }
        Ok(Self {
            model: CvitModel::from_params(file.model, params)?,
            norm_stats: file.norm_stats,
            best_epoch: file.best_epoch,
            run: file.run,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            rows: 10,
            cols: 10,
            embed_dim: 8,
            heads: 2,
            layers: 1,
            ffn_hidden: 16,
            head_hidden: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let ck = Checkpoint {
            model: CvitModel::new(small(), 3).unwrap(),
            norm_stats: NormStats::IDENTITY,
            best_epoch: 4,
            run: Some(RunConfig::default()),
        };
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        for ((_, a), (_, b)) in ck.model.params.named().into_iter().zip(back.model.params.named()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.run, ck.run);
        assert_eq!(back.to_json().unwrap(), ck.to_json().unwrap());
    }

    #[test]
    fn tampered_files_are_rejected() {
        let ck = Checkpoint {
            model: CvitModel::new(small(), 3).unwrap(),
            norm_stats: NormStats::IDENTITY,
            best_epoch: 1,
            run: None,
        };
        let json = ck.to_json().unwrap();
        let renamed = json.replacen("patch_embed.weight", "patch_embed.w", 1);
        assert!(matches!(Checkpoint::from_json(&renamed), Err(Error::CheckpointMismatch(_))));
        let wrong_format = json.replacen(FORMAT, "other", 1);
        assert!(matches!(Checkpoint::from_json(&wrong_format), Err(Error::CheckpointMismatch(_))));
        assert!(Checkpoint::from_json("{").is_err());
    }
}
