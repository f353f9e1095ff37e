//! Benchmark configuration.
//!
//! A config file is a JSON document mirroring [`ExperimentConfig`]; every
//! field is optional and defaults to the study settings. CLI flags override
//! file values.

use crate::basis::{default_level_specs, LevelSpec};
use crate::gp::MaternParams;
use crate::net::TrainConfig;
use crate::surfaces::ProcessKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Whether the Kriging baseline fits its covariance or uses the generating
/// parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrigingMode {
    /// Maximum-likelihood fit on the target data (the honest baseline).
    Ml,
    /// The simulation's true parameters, for diagnostics.
    True,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub processes: Vec<ProcessKind>,
    pub target_sizes: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Basis levels; the default four-level stack embeds into 139 dims.
    pub basis: Vec<LevelSpec>,
    /// Stationary process parameters (tau2 is its nugget variance).
    pub matern: MaternParams,
    /// Nugget variance added to the non-stationary surface.
    pub nonstationary_noise_var: f64,
    /// Source grid is source_side^2 points.
    pub source_side: usize,
    /// Held-out evaluation points per replicate.
    pub test_size: usize,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub target_only: TrainConfig,
    pub kriging: KrigingMode,
    /// Pretrain inside every replicate instead of once per process
    /// (sensitivity mode; expensive).
    pub pretrain_per_replicate: bool,
    /// Worker threads for replicate-level parallelism; None = logical cores.
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            processes: vec![ProcessKind::Stationary, ProcessKind::Nonstationary],
            target_sizes: vec![25, 64, 100, 225],
            replicates: 30,
            master_seed: 1,
            basis: default_level_specs(),
            matern: MaternParams::default(),
            nonstationary_noise_var: 1e-6,
            source_side: 70,
            test_size: 2000,
            pretrain: TrainConfig {
                epochs: 1500,
                learning_rate: 1e-3,
                batch_size: 64,
                validation_fraction: 0.2,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                epochs: 1000,
                learning_rate: 1e-3,
                batch_size: 64,
                validation_fraction: 0.0,
                ..TrainConfig::default()
            },
            target_only: TrainConfig {
                epochs: 1000,
                learning_rate: 1e-3,
                batch_size: 64,
                validation_fraction: 0.0,
                ..TrainConfig::default()
            },
            kriging: KrigingMode::Ml,
            pretrain_per_replicate: false,
            threads: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(serde_json::Error),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Io(e) => write!(f, "cannot read config: {e}"),
            Self::Parse(e) => write!(f, "cannot parse config: {e}"),
            Self::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        let cfg: Self = serde_json::from_str(&text).map_err(ConfigError::Parse)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.processes.is_empty() {
            return Err(ConfigError::Invalid("no processes configured".into()));
        }
        if self.target_sizes.is_empty() {
            return Err(ConfigError::Invalid("no target sizes configured".into()));
        }
        for &n in &self.target_sizes {
            let m = (n as f64).sqrt().round() as usize;
            if n == 0 || m * m != n {
                return Err(ConfigError::Invalid(format!(
                    "target size {n} is not a positive perfect square"
                )));
            }
        }
        {
            let mut sorted = self.target_sizes.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.target_sizes.len() {
                return Err(ConfigError::Invalid("duplicate target sizes".into()));
            }
        }
        if self.replicates == 0 {
            return Err(ConfigError::Invalid("replicates must be >= 1".into()));
        }
        if self.source_side < 2 {
            return Err(ConfigError::Invalid("source_side must be >= 2".into()));
        }
        if self.test_size == 0 {
            return Err(ConfigError::Invalid("test_size must be >= 1".into()));
        }
        if self.basis.is_empty() {
            return Err(ConfigError::Invalid("basis needs at least one level".into()));
        }
        self.matern
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, tc) in [
            ("pretrain", &self.pretrain),
            ("finetune", &self.finetune),
            ("target_only", &self.target_only),
        ] {
            tc.validate()
                .map_err(|e| ConfigError::Invalid(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    /// Canonical-JSON FNV-1a hash; keyed into the reproducibility manifest.
    pub fn content_hash(&self) -> u64 {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in canonical.as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
        hash
    }

    /// Replicate-level sampler settings for a given target size.
    pub fn replicate_config(&self, target_n: usize) -> crate::surfaces::ReplicateConfig {
        crate::surfaces::ReplicateConfig {
            source_side: self.source_side,
            target_n,
            test_n: self.test_size,
            matern: self.matern,
            nonstationary_noise_var: self.nonstationary_noise_var,
            jitter_fraction: 0.125,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn default_grid_is_the_study_grid() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.target_sizes, vec![25, 64, 100, 225]);
        assert_eq!(cfg.replicates, 30);
        assert_eq!(cfg.source_side, 70);
        assert_eq!(cfg.pretrain.epochs, 1500);
        assert_eq!(cfg.finetune.epochs, 1000);
        assert!((cfg.pretrain.learning_rate - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_preserves_hash() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg.content_hash(), back.content_hash());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"replicates": 3, "master_seed": 9}"#).unwrap();
        assert_eq!(cfg.replicates, 3);
        assert_eq!(cfg.master_seed, 9);
        assert_eq!(cfg.target_sizes, vec![25, 64, 100, 225]);
    }

    #[test]
    fn non_square_target_size_is_invalid() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"target_sizes": [30]}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let res: Result<ExperimentConfig, _> = serde_json::from_str(r#"{"repplicates": 3}"#);
        assert!(res.is_err());
    }
}
