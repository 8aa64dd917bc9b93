//! TOML configuration with environment overrides.
//!
//! Sections: `spatial`, `tracker`, `permanence`, `kalman1`, `kalman2`,
//! `pipeline`. Any key can be overridden by `SKELFILTER_<SECTION>_<KEY>`,
//! e.g. `SKELFILTER_PERMANENCE_PARTICLE_COUNT=400`. Override values are
//! parsed as TOML literals and fall back to plain strings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kalman::KalmanConfig;
use crate::permanence::PermanenceConfig;
use crate::pipeline::{FilterKind, OperatorRule, PipelineConfig};
use crate::skeleton::Joint;
use crate::spatial::SpatialConfig;
use crate::tracker::TrackerConfig;
use crate::ConfigError;

pub const ENV_PREFIX: &str = "SKELFILTER_";

const SECTIONS: [&str; 6] = ["spatial", "tracker", "permanence", "kalman1", "kalman2", "pipeline"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub filter: FilterKind,
    pub target_joint: Joint,
    pub operator: OperatorRule,
    pub warmup_frames: usize,
    pub safety_offset: [f64; 3],
    pub follower_gain: f64,
    pub seed: u64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            filter: p.filter,
            target_joint: p.target_joint,
            operator: p.operator,
            warmup_frames: p.warmup_frames,
            safety_offset: p.safety_offset,
            follower_gain: p.follower_gain,
            seed: p.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub spatial: SpatialConfig,
    pub tracker: TrackerConfig,
    pub permanence: PermanenceConfig,
    pub kalman1: KalmanConfig,
    pub kalman2: KalmanConfig,
    pub pipeline: PipelineSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            spatial: SpatialConfig::default(),
            tracker: TrackerConfig::default(),
            permanence: PermanenceConfig::default(),
            kalman1: KalmanConfig::constant_velocity(),
            kalman2: KalmanConfig::constant_acceleration(),
            pipeline: PipelineSection::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.pipeline_config().validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Applies `SKELFILTER_<SECTION>_<KEY>` pairs; unrelated names are ignored.
    pub fn with_overrides<I, K, V>(self, vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table = toml::Table::try_from(&self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (name, raw) in vars {
            let Some(rest) = name.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let rest = rest.to_ascii_lowercase();
            let Some((section, key)) = SECTIONS
                .iter()
                .find_map(|s| rest.strip_prefix(s).and_then(|k| k.strip_prefix('_')).map(|k| (*s, k)))
            else {
                return Err(ConfigError::invalid(name.as_ref(), "unknown config section"));
            };
            let value = parse_literal(raw.as_ref());
            table
                .get_mut(section)
                .and_then(|v| v.as_table_mut())
                .expect("every section serializes as a table")
                .insert(key.to_owned(), value);
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.pipeline_config().validate()?;
        Ok(cfg)
    }

    /// Applies overrides from the process environment.
    pub fn with_env(self) -> Result<Self, ConfigError> {
        self.with_overrides(std::env::vars())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let p = &self.pipeline;
        PipelineConfig {
            spatial: self.spatial.clone(),
            tracker: self.tracker.clone(),
            filter: p.filter,
            permanence: self.permanence.clone(),
            kalman1: self.kalman1.clone(),
            kalman2: self.kalman2.clone(),
            target_joint: p.target_joint,
            operator: p.operator,
            warmup_frames: p.warmup_frames,
            safety_offset: p.safety_offset,
            follower_gain: p.follower_gain,
            seed: p.seed,
        }
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}
