use crate::neural::{ModelConfig, TrainConfig};
use crate::probe::{ProtocolConfig, Tap};
use crate::scene::{DatasetKind, SamplerConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 7 s sequences, 1024-point frames, 128-unit bottleneck.
    Paper,
    /// 4 s sequences, 256-point frames, 32-unit bottleneck.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected paper or desk)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSource {
    /// Deterministic speech-like signals, no files needed.
    Synthetic,
    /// `<root>/<speaker>/*.wav` trees for training and testing.
    Directory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub source: CorpusSource,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Speaker count of each synthetic split.
    pub train_speakers: usize,
    pub test_speakers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub sampler: SamplerConfig,
    pub frame_len: usize,
    pub train_kind: DatasetKind,
    pub train_count: usize,
    pub test_kinds: Vec<DatasetKind>,
    pub test_count: usize,
    pub train_snr_grid: Vec<f64>,
    pub test_snr_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    pub taps: Vec<Tap>,
    pub protocol: ProtocolConfig,
    /// Also write per-sequence scores next to each report.
    pub per_sequence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub workspace: PathBuf,
    pub corpus: CorpusConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub probe: ProbeSettings,
}

fn snr_range(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    (lo..=hi).step_by(step as usize).map(f64::from).collect()
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let (duration, frame_len, model, train_count, test_count, epochs) = match preset {
            Preset::Paper => (7.0, 1024, ModelConfig::paper(3), 4000, 50, 50),
            Preset::Desk => (4.0, 256, ModelConfig::desk(3), 200, 25, 12),
        };
        let test_snr_grid = match preset {
            Preset::Paper => vec![-10.0, -5.0, 0.0, 5.0, 10.0, 20.0, 30.0, 50.0],
            Preset::Desk => vec![-10.0, 0.0, 10.0, 30.0],
        };
        Self {
            preset,
            seed: 0,
            workspace: PathBuf::from("workspace"),
            corpus: CorpusConfig {
                source: CorpusSource::Synthetic,
                train_path: None,
                test_path: None,
                train_speakers: 64,
                test_speakers: 24,
            },
            data: DataConfig {
                sampler: SamplerConfig::default().with_duration(duration),
                frame_len,
                train_kind: DatasetKind::DsWgn,
                train_count,
                test_kinds: vec![
                    DatasetKind::DstClean,
                    DatasetKind::DstWgn,
                    DatasetKind::Dst1Spk,
                    DatasetKind::Dst1Pos,
                ],
                test_count,
                train_snr_grid: snr_range(-10, 50, 5),
                test_snr_grid,
            },
            model,
            train: TrainConfig {
                epochs,
                val_count: test_count.min(train_count / 10),
                ..TrainConfig::default()
            },
            probe: ProbeSettings {
                taps: Tap::BOTH.to_vec(),
                protocol: ProtocolConfig::default(),
                per_sequence: true,
            },
        }
        .with_seed(0)
    }

    /// Propagates the global seed into the model, training and probe seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.model.seed = derive_seed(seed, "model");
        self.train.seed = derive_seed(seed, "train");
        self.probe.protocol.seed = derive_seed(seed, "probe");
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.data.sampler.validate()?;
        self.model.validate()?;
        if self.model.frame_len() != self.data.frame_len {
            return Err(Error::Config(format!(
                "model expects {}-point frames but data uses {}",
                self.model.frame_len(),
                self.data.frame_len
            )));
        }
        if self.model.num_channels != self.data.sampler.num_mics {
            return Err(Error::Config(format!(
                "model has {} channels but the array has {} microphones",
                self.model.num_channels, self.data.sampler.num_mics
            )));
        }
        if !self.data.train_kind.is_training() {
            return Err(Error::Config(format!("{} is not a training dataset", self.data.train_kind)));
        }
        if let Some(k) = self.data.test_kinds.iter().find(|k| k.is_training()) {
            return Err(Error::Config(format!("{k} is not a test dataset")));
        }
        if self.corpus.source == CorpusSource::Directory
            && (self.corpus.train_path.is_none() || self.corpus.test_path.is_none())
        {
            return Err(Error::Config("directory corpus needs train_path and test_path".into()));
        }
        if self.probe.taps.is_empty() {
            return Err(Error::Config("at least one tap must be probed".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Independent 64-bit seed for a named purpose.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}
