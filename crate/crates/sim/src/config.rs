//! Run configuration file.
//!
//! A run is described by one TOML document with four tables:
//!
//! ```toml
//! [federation]            # FederationConfig, with nested model/optimizer/
//!                         # aggregator/metric/adversary tables
//! [dataset]               # kind = "synthetic" | "csv"
//! [partition]             # scheme, val_fraction, test_fraction, seed
//! [output]                # dir, write_models
//! ```
//!
//! Unknown keys are rejected at every level. Errors carry the line of the
//! offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rfc_core::consensus::FederationConfig;
use rfc_core::data::{Grid, PartitionConfig};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        num_classes: usize,
        height: usize,
        width: usize,
        per_class: usize,
        noise_sigma: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        height: usize,
        width: usize,
        num_classes: usize,
    },
}

impl DatasetSource {
    pub fn grid(&self) -> Grid {
        match *self {
            DatasetSource::Synthetic { height, width, .. }
            | DatasetSource::Csv { height, width, .. } => Grid { height, width },
        }
    }

    pub fn num_classes(&self) -> usize {
        match *self {
            DatasetSource::Synthetic { num_classes, .. }
            | DatasetSource::Csv { num_classes, .. } => num_classes,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Write every winning model to `models/<digest>.bin`.
    #[serde(default = "yes")]
    pub write_models: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            write_models: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub federation: FederationConfig,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> rfc_core::Result<()> {
        use rfc_core::Error::InvalidConfig;
        self.federation.validate()?;
        let grid = self.dataset.grid();
        if grid.height == 0 || grid.width == 0 {
            return Err(InvalidConfig(
                "dataset height and width must be >= 1".into(),
            ));
        }
        if self.federation.model.input_dim != grid.cells() {
            return Err(InvalidConfig(format!(
                "model input_dim {} must equal dataset height * width = {}",
                self.federation.model.input_dim,
                grid.cells()
            )));
        }
        if self.federation.model.num_classes != self.dataset.num_classes() {
            return Err(InvalidConfig(format!(
                "model num_classes {} must equal dataset num_classes {}",
                self.federation.model.num_classes,
                self.dataset.num_classes()
            )));
        }
        self.federation
            .effective_adversary()
            .validate(grid, self.federation.model.num_classes)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config is always representable as TOML")
    }

    /// Parses and validates a configuration document. `origin` names the
    /// source in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| SimError::Parse {
            path: origin.to_path_buf(),
            line: e.span().map_or(1, |s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|e| SimError::Parse {
            path: origin.to_path_buf(),
            line: blame_line(text, &e.to_string()),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::parse(&text, path)
    }
}

fn line_of_offset(text: &str, offset: usize) -> u64 {
    text[..offset.min(text.len())].matches('\n').count() as u64 + 1
}

/// 1-based line where `key = ...` is assigned, if present.
pub fn key_line(text: &str, key: &str) -> Option<u64> {
    text.lines()
        .position(|l| {
            l.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i as u64 + 1)
}

/// Picks the line of the first configuration key named in `message`,
/// falling back to the `[federation]` header or line 1.
fn blame_line(text: &str, message: &str) -> u64 {
    const KEYS: &[&str] = &[
        "clients_sampled_per_round",
        "adversaries_per_pool",
        "clients_per_pool",
        "num_pools",
        "rounds",
        "server_lr",
        "input_dim",
        "num_classes",
        "hidden_dim",
        "learning_rate",
        "local_epochs",
        "batch_size",
        "adam_epsilon",
        "bulyan_m",
        "krum_f",
        "trigger_size",
        "target_label",
        "boost_eta",
        "poison_fraction",
        "placement",
        "height",
        "width",
    ];
    for key in KEYS {
        if message.contains(key) {
            if let Some(line) = key_line(text, key) {
                return line;
            }
        }
    }
    if message.contains("minimum") {
        if let Some(line) = key_line(text, "rule") {
            return line;
        }
    }
    text.lines()
        .position(|l| l.trim() == "[federation]")
        .map_or(1, |i| i as u64 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn desk_config_round_trips_through_toml() {
        let cfg = presets::desk();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::parse(&text, Path::new("x.toml")).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let mut text = presets::desk().to_toml();
        text = text.replacen("[federation]\n", "[federation]\nbogus_key = 3\n", 1);
        let expected = key_line(&text, "bogus_key").unwrap();
        match RunConfig::parse(&text, Path::new("c.toml")) {
            Err(SimError::Parse { line, message, .. }) => {
                assert_eq!(line, expected);
                assert!(message.contains("bogus_key"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn zero_rounds_rejected_with_line() {
        let text = presets::desk().to_toml();
        let line = key_line(&text, "rounds").unwrap() as usize;
        let text: String = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i + 1 == line {
                    "rounds = 0".to_string()
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        match RunConfig::parse(&text, Path::new("c.toml")) {
            Err(e @ SimError::Parse { .. }) => {
                assert_eq!(e.exit_code(), 1);
                assert!(e.to_string().starts_with(&format!("c.toml:{line}:")), "{e}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_grid_rejected() {
        let mut cfg = presets::desk();
        cfg.federation.model.input_dim = 10;
        assert!(cfg.validate().is_err());
    }
}
