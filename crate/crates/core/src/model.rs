//! A trained scorer (network + standard scores) and its checkpoint file.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::StandardScores;
use crate::net::{self, Input, NetworkParams};
use crate::train::{EpochRecord, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "crowdrank-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub network: NetworkParams,
    pub standard: StandardScores,
}

impl Model {
    pub fn score(&self, input: &Input) -> Result<f64> {
        net::score(input, &self.network)
    }

    pub fn score_all<'a>(&self, inputs: impl IntoIterator<Item = &'a Input>) -> Result<Vec<f64>> {
        inputs.into_iter().map(|x| self.score(x)).collect()
    }
}

/// Self-describing model file. Floats are written in shortest round-trip
/// decimal form, so saving and loading is bitwise lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: Model,
    #[serde(default)]
    pub config: Option<TrainConfig>,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
    /// Number of completed epochs across both stages.
    #[serde(default)]
    pub epochs_completed: usize,
}

impl Checkpoint {
    pub fn new(model: Model, config: Option<TrainConfig>, history: Vec<EpochRecord>) -> Self {
        let epochs_completed = history.len();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            model,
            config,
            history,
            epochs_completed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "{}: unsupported checkpoint format `{}`",
                path.display(),
                ck.format
            )));
        }
        ck.model.network.validate()?;
        if !ck.model.standard.is_finite() {
            return Err(Error::Config("non-finite standard scores in checkpoint".into()));
        }
        Ok(ck)
    }
}
