//! Run configuration: one TOML document with a section per pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusConfig;
use crate::em::{EmConfig, ThresholdConfig};
use crate::events::WindowSpec;
use crate::model::{LossConfig, ModelConfig};

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_frames: usize,
    pub loss: LossConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_frames: 512,
            loss: LossConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub window: WindowSpec,
    /// Relative corruption level; 0 leaves counts untouched.
    pub noise: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec::FullTrack,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    /// Local peaks above a fixed threshold.
    #[default]
    Threshold,
    /// Histogram-constrained peak picking; needs histogram files.
    Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub decoder: Decoder,
    pub threshold: ThresholdConfig,
}

/// Where each stage reads and writes. Relative paths resolve against the
/// working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus_dir: PathBuf,
    pub histogram_dir: PathBuf,
    pub pretrained: PathBuf,
    pub em_dir: PathBuf,
    pub predictions_dir: PathBuf,
    pub report: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        let root = PathBuf::from("runs");
        Self {
            corpus_dir: root.join("corpus"),
            histogram_dir: root.join("histograms"),
            pretrained: root.join("pretrained.ckpt"),
            em_dir: root.join("em"),
            predictions_dir: root.join("predictions"),
            report: root.join("report.json"),
        }
    }
}

impl PathsConfig {
    pub fn manifest(&self) -> PathBuf {
        self.corpus_dir.join("manifest.json")
    }

    pub fn em_checkpoint(&self) -> PathBuf {
        self.em_dir.join("model.ckpt")
    }
}

/// Everything one invocation needs. Every random stream is derived from
/// `seed`; seeds inside sections are overwritten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub histogram: HistogramConfig,
    pub em: EmConfig,
    pub predict: PredictConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides and checks the
    /// result. Overrides use dotted keys and TOML values; a value that does
    /// not parse as TOML is taken as a string.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("invalid config: {}", e.message())))?;
        if seed.is_some() {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seed.is_none() {
            return Err(CliError::Usage(
                "a seed is required: set `seed` in the config or pass --seed".into(),
            ));
        }
        let usage = |e: crate::Error| CliError::Usage(format!("invalid config: {e}"));
        self.corpus.score.validate().map_err(|e| usage(e.into()))?;
        self.corpus.timbre_a.validate().map_err(|e| usage(e.into()))?;
        self.corpus.timbre_b.validate().map_err(|e| usage(e.into()))?;
        self.corpus.features.validate().map_err(|e| usage(e.into()))?;
        self.corpus.augment.validate().map_err(|e| usage(e.into()))?;
        self.pretrain.loss.validate().map_err(|e| usage(e.into()))?;
        self.em.validate().map_err(usage)?;
        self.histogram.window.validate().map_err(|e| usage(e.into()))?;
        if !(0.0..1.0).contains(&self.histogram.noise) {
            return Err(CliError::Usage("histogram.noise must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{assignment}`")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{p}` in `{key}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
