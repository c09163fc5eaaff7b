//! Run configuration: a flat-key JSON file merged with command-line
//! overrides, where the override wins.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fee::FeeParams;
use crate::metrics::DA_TX_GAS;

/// First block of the default analysis window (the Dencun activation block).
pub const DEFAULT_START_BLOCK: u64 = 19_426_589;
pub const DEFAULT_END_BLOCK: u64 = 20_611_514;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    pub fn is_io(&self) -> bool {
        matches!(self, ConfigError::Io { .. })
    }
}

/// Every configurable key, all optional. Used both for the file and for
/// command-line overrides.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_block: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end_block: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub submissions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prices: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub include_flush: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_log: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_blob_base_fee: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update_fraction: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gas_per_blob: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_blob_gas: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_blobs_per_block: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub da_tx_gas: Option<u64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        ConfigLayer { $($field: $top.$field.or($base.$field)),* }
    };
}

impl ConfigLayer {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut layer: ConfigLayer =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut layer.submissions,
            &mut layer.blocks,
            &mut layer.prices,
            &mut layer.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(layer)
    }

    /// `self` with every key set in `top` replaced.
    pub fn overlay(self, top: ConfigLayer) -> ConfigLayer {
        let base = self;
        overlay!(
            base,
            top,
            start_block,
            end_block,
            submissions,
            blocks,
            prices,
            out_dir,
            include_flush,
            event_log,
            min_blob_base_fee,
            update_fraction,
            gas_per_blob,
            target_blob_gas,
            max_blobs_per_block,
            da_tx_gas
        )
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub start_block: u64,
    pub end_block: u64,
    pub submissions: PathBuf,
    pub blocks: PathBuf,
    pub prices: PathBuf,
    pub out_dir: PathBuf,
    pub include_flush: bool,
    pub event_log: bool,
    pub fee: FeeParams,
    pub da_tx_gas: u64,
}

impl RunConfig {
    /// Applies defaults to unset keys and validates the result.
    pub fn resolve(layer: ConfigLayer) -> Result<Self, ConfigError> {
        let d = FeeParams::default();
        let fee = FeeParams {
            min_blob_base_fee: layer.min_blob_base_fee.unwrap_or(d.min_blob_base_fee),
            update_fraction: layer.update_fraction.unwrap_or(d.update_fraction),
            gas_per_blob: layer.gas_per_blob.unwrap_or(d.gas_per_blob),
            target_blob_gas: layer.target_blob_gas.unwrap_or(d.target_blob_gas),
            max_blobs_per_block: layer.max_blobs_per_block.unwrap_or(d.max_blobs_per_block),
        };
        fee.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let cfg = RunConfig {
            start_block: layer.start_block.unwrap_or(DEFAULT_START_BLOCK),
            end_block: layer.end_block.unwrap_or(DEFAULT_END_BLOCK),
            submissions: layer
                .submissions
                .unwrap_or_else(|| "submissions.csv".into()),
            blocks: layer.blocks.unwrap_or_else(|| "blocks.csv".into()),
            prices: layer.prices.unwrap_or_else(|| "prices.csv".into()),
            out_dir: layer.out_dir.unwrap_or_else(|| "out".into()),
            include_flush: layer.include_flush.unwrap_or(true),
            event_log: layer.event_log.unwrap_or(false),
            fee,
            da_tx_gas: layer.da_tx_gas.unwrap_or(DA_TX_GAS),
        };
        if cfg.start_block > cfg.end_block {
            return Err(ConfigError::Invalid(format!(
                "start_block {} is after end_block {}",
                cfg.start_block, cfg.end_block
            )));
        }
        Ok(cfg)
    }

    /// Loads `file` (if any) and applies `overrides` on top.
    pub fn from_sources(file: Option<&Path>, overrides: ConfigLayer) -> Result<Self, ConfigError> {
        let base = match file {
            Some(path) => ConfigLayer::load(path)?,
            None => ConfigLayer::default(),
        };
        Self::resolve(base.overlay(overrides))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::resolve(ConfigLayer::default()).unwrap();
        assert_eq!(
            (cfg.start_block, cfg.end_block),
            (DEFAULT_START_BLOCK, DEFAULT_END_BLOCK)
        );
        assert!(cfg.include_flush);
        assert!(!cfg.event_log);
        assert_eq!(cfg.fee, FeeParams::default());
        assert_eq!(cfg.da_tx_gas, 21_000);
    }

    #[test]
    fn file_paths_resolve_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(
            &path,
            r#"{"start_block": 10, "end_block": 20, "submissions": "subs.csv", "out_dir": "/abs/out", "max_blobs_per_block": 9}"#,
        )
        .unwrap();
        let cfg = RunConfig::from_sources(
            Some(&path),
            ConfigLayer {
                end_block: Some(15),
                ..ConfigLayer::default()
            },
        )
        .unwrap();
        assert_eq!((cfg.start_block, cfg.end_block), (10, 15));
        assert_eq!(cfg.submissions, dir.path().join("subs.csv"));
        assert_eq!(cfg.out_dir, PathBuf::from("/abs/out"));
        assert_eq!(cfg.fee.max_blobs_per_block, 9);
    }

    #[test]
    fn rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"start_blok": 1}"#).unwrap();
        assert!(matches!(
            ConfigLayer::load(&path),
            Err(ConfigError::Parse { .. })
        ));
        assert!(ConfigLayer::load(&dir.path().join("missing.json"))
            .unwrap_err()
            .is_io());
        let inverted = ConfigLayer {
            start_block: Some(5),
            end_block: Some(4),
            ..ConfigLayer::default()
        };
        assert!(matches!(
            RunConfig::resolve(inverted),
            Err(ConfigError::Invalid(_))
        ));
    }
}
