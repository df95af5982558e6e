//! TOML run configuration.
//!
//! Every table is optional and every missing key takes its default, so an
//! empty file is a valid config. Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! threads = 4
//!
//! [scenario]
//! preset = "static_car"      # or: manifest = "data/manifest.json"
//!                            # or: [scenario.simulation] ...
//!
//! [discovery]
//! history_frames = 2
//! scales = [1.0, 0.5]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::validate_sequence_id;
use super::FormatError;
use crate::error::{Error, Result};
use crate::discovery::DiscoveryConfig;
use crate::evaluation::EvalConfig;
use crate::pipeline::PipelineConfig;
use crate::refinement::RefineConfig;
use crate::simulator::{preset, SimConfig};
use crate::tracking::TrackingConfig;

/// Where the input sequence comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Name of a built-in simulator preset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Inline simulator configuration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
    /// Existing dataset; relative paths resolve against the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Sequence id for simulated data; defaults to the preset name or `sim`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequence: Option<String>,
}

/// A resolved scenario.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Simulate { sequence: String, config: SimConfig },
    Manifest(PathBuf),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the simulator seed and the seeds of randomised stages.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads; unset uses every core. Outputs do not depend on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub scenario: Scenario,
    pub discovery: DiscoveryConfig,
    pub tracking: TrackingConfig,
    pub refinement: RefineConfig,
    pub evaluation: EvalConfig,
}

impl RunConfig {
    /// Parses TOML text. Syntax errors are format errors, schema and value
    /// errors are config errors.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| FormatError::Syntax {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative scenario manifest is resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(m) = &mut cfg.scenario.manifest {
            if m.is_relative() {
                *m = path.parent().unwrap_or(Path::new("")).join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let s = &self.scenario;
        let chosen = [s.preset.is_some(), s.simulation.is_some(), s.manifest.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if chosen > 1 {
            return Err(Error::Config("scenario: give at most one of preset, simulation, manifest".into()));
        }
        if let Some(name) = &s.preset {
            if preset(name).is_none() {
                return Err(Error::Config(format!("unknown preset {name:?}")));
            }
        }
        if let Some(seq) = &s.sequence {
            validate_sequence_id(seq)?;
        }
        self.pipeline().validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Stage hyperparameters with the seed applied.
    pub fn pipeline(&self) -> PipelineConfig {
        let pc = PipelineConfig {
            discovery: self.discovery.clone(),
            tracking: self.tracking,
            refinement: self.refinement,
            evaluation: self.evaluation,
        };
        match self.seed {
            Some(seed) => pc.with_seed(seed),
            None => pc,
        }
    }

    /// Resolves the scenario, or `None` when the config names none.
    pub fn source(&self) -> Result<Option<Source>> {
        let s = &self.scenario;
        if let Some(m) = &s.manifest {
            return Ok(Some(Source::Manifest(m.clone())));
        }
        let (name, mut config) = match (&s.preset, &s.simulation) {
            (Some(p), _) => (p.clone(), preset(p).ok_or_else(|| Error::Config(format!("unknown preset {p:?}")))?),
            (None, Some(sim)) => ("sim".to_string(), sim.clone()),
            (None, None) => return Ok(None),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(Some(Source::Simulate {
            sequence: s.sequence.clone().unwrap_or(name),
            config,
        }))
    }

    /// The config with every default spelled out, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].matches('\n').count() + 1
}
