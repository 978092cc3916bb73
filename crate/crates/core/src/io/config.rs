//! Run configuration, read from a single TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::McmcConfig;
use crate::model::Transform;
use crate::selection::SelectionConfig;
use crate::simulation::{default_grid, GridCell, SimulationConfig, SurvivalConfig};

/// One input platform file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub transform: Transform,
    /// Clip proportions into `[eps, 1 - eps]` before a logit transform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicalSpec {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicationConfig {
    pub replicates: usize,
    pub grid: Vec<GridCell>,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            replicates: 10,
            grid: default_grid(),
        }
    }
}

/// Everything a run needs. Relative paths are resolved against the directory
/// of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(rename = "platform")]
    pub platforms: Vec<PlatformSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clinical: Option<ClinicalSpec>,
    pub mcmc: McmcConfig,
    pub selection: SelectionConfig,
    pub simulation: SimulationConfig,
    pub survival: SurvivalConfig,
    pub replication: ReplicationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: None,
            platforms: Vec::new(),
            clinical: None,
            mcmc: McmcConfig::default(),
            selection: SelectionConfig::default(),
            simulation: SimulationConfig::default(),
            survival: SurvivalConfig::default(),
            replication: ReplicationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a configuration file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in &mut config.platforms {
            resolve(&mut p.path);
        }
        if let Some(c) = &mut config.clinical {
            resolve(&mut c.path);
        }
        if let Some(o) = &mut config.out {
            resolve(o);
        }
        Ok(config)
    }

    /// Checks shared by every subcommand.
    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        self.selection.validate()?;
        self.simulation.validate()?;
        Ok(())
    }

    /// Checks for fitting real inputs.
    pub fn validate_inputs(&self) -> Result<()> {
        self.validate()?;
        if self.platforms.is_empty() {
            return Err(Error::Config("at least one [[platform]] entry is required".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::from_toml(
            r#"
            seed = 9
            [[platform]]
            path = "a.csv"
            transform = "logit"
            clip_eps = 1e-6
            [mcmc.schedule]
            stage1a = 10
            [selection]
            fdr_level = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.platforms[0].transform, Transform::Logit);
        assert_eq!(c.mcmc.schedule.stage1a, 10);
        assert_eq!(c.mcmc.schedule.stage1b, 1000);
        assert_eq!(c.selection.fdr_level, 0.1);
        c.validate_inputs().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_levels_are_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        let c = RunConfig::from_toml("[selection]\nfdr_level = 1.5").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate_inputs().is_err());
    }
}
