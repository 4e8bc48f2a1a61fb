//! Experiment configuration read from TOML.
//!
//! Every table rejects unknown keys, and every error names the dotted path
//! of the offending key.
//!
//! ```toml
//! seeds = [0, 1, 2]
//! train_episodes = 200
//! eval_episodes = 5
//! schemes = ["bfs-greedy", "pbu-greedy", "bfs-mab", "pbu-mab", "proposed"]
//! demand_units_mb = [10.0, 15.0, 20.0]
//! moving_average_window = 20
//!
//! [env]        # RBs, groups, cycle length, arrays, orbit, channel, link
//! [agent]      # network sizes, learning rates, clip, rollout depth
//! [baselines]  # beam-sweep step, bandit exploration
//! ```

use crate::baselines::{BaselineConfig, SchemeId};
use crate::collab::AgentConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// One independent run per seed.
    pub seeds: Vec<u64>,
    /// Training episodes for learned schemes.
    pub train_episodes: u64,
    /// Evaluation episodes per scheme and seed.
    pub eval_episodes: u64,
    pub schemes: Vec<SchemeId>,
    /// Demand units swept, in megabits.
    pub demand_units_mb: Vec<f64>,
    /// Window of the moving averages in CSV series and plots.
    pub moving_average_window: usize,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub baselines: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            train_episodes: 200,
            eval_episodes: 5,
            schemes: vec![
                SchemeId::BFS_GREEDY,
                SchemeId::PBU_GREEDY,
                SchemeId::BFS_MAB,
                SchemeId::PBU_MAB,
                SchemeId::PROPOSED,
            ],
            demand_units_mb: vec![10.0, 15.0, 20.0],
            moving_average_window: 20,
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

impl ExperimentConfig {
    /// Small instance that trains in minutes on a laptop.
    pub fn desk() -> Self {
        Self { env: EnvConfig::desk(), agent: AgentConfig::desk(), ..Self::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_err("<document>", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path == "." { "<document>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<document>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "at least one seed is required"));
        }
        if self.schemes.is_empty() {
            return Err(config_err("schemes", "at least one scheme is required"));
        }
        if self.eval_episodes == 0 {
            return Err(config_err("eval_episodes", "must be at least 1"));
        }
        if self.demand_units_mb.is_empty() || self.demand_units_mb.iter().any(|u| !(*u > 0.0 && u.is_finite())) {
            return Err(config_err("demand_units_mb", "needs at least one positive unit"));
        }
        if self.moving_average_window == 0 {
            return Err(config_err("moving_average_window", "must be at least 1"));
        }
        let nested = |prefix: &str, r: std::result::Result<(), (String, String)>| {
            r.map_err(|(p, m)| config_err(format!("{prefix}.{p}"), m))
        };
        nested("env", self.env.validate())?;
        nested("agent", self.agent.validate())?;
        nested("baselines", self.baselines.validate())?;
        Ok(())
    }
}
