//! Experiment configuration, loadable from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [world]
//! n_agents = 10
//! duration = 300.0
//! arena = { width = 1000.0, height = 1000.0 }
//!
//! [evolution]
//! generations = 20
//! batch = 50
//! ```
//!
//! Missing fields take their defaults; unknown fields are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archive;
use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::metrics::BinningConfig;
use crate::sim::WorldConfig;

/// Settings for the analysis studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub reeval_evals: usize,
    pub transition_repetitions: usize,
    /// Length of the window at the end of a run whose metrics are compared, s.
    pub final_window: f64,
    pub ellipse_repetitions: usize,
    pub ablation_runs: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            reeval_evals: 20,
            transition_repetitions: 100,
            final_window: 300.0,
            ellipse_repetitions: 1000,
            ablation_runs: 8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub world: WorldConfig,
    pub evolution: EvolutionConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Serialize)]
struct HashedPart<'a> {
    world: &'a WorldConfig,
    evolution: &'a EvolutionConfig,
    binning: BinningConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.evolution.validate()?;
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if !(self.analysis.final_window > 0.0) {
            return Err(Error::Config("final_window must be positive".into()));
        }
        Ok(())
    }

    pub fn binning(&self) -> BinningConfig {
        BinningConfig::for_arena(&self.world.arena)
    }

    /// Identifies everything that shapes an archive except the master seed.
    pub fn config_hash(&self) -> String {
        archive::config_hash(&HashedPart {
            world: &self.world,
            evolution: &self.evolution,
            binning: self.binning(),
        })
    }
}
