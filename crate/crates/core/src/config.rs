//! JSON run configuration shared by every CLI subcommand.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentMode;
use crate::codec::read_file;
use crate::convnet::{NetworkSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::fbcca::FbccaConfig;
use crate::linsvm::SvmTrainConfig;
use crate::preprocess::PipelineConfig;

/// Environment variable consulted when neither a flag nor the config sets a seed.
pub const SEED_ENV: &str = "SSVEP_BENCH_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    /// Pretrained convolutional prefix, new head.
    #[default]
    Cnn,
    /// Same network, randomly initialized.
    #[serde(
        alias = "cnn_scratch",
        alias = "cnn-scratch",
        alias = "cnn-no-transfer"
    )]
    CnnNoTransfer,
    Svm,
    Fbcca,
    /// Predicts the most frequent training class (control).
    Majority,
}

impl Classifier {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cnn => "cnn",
            Self::CnnNoTransfer => "cnn_no_transfer",
            Self::Svm => "svm",
            Self::Fbcca => "fbcca",
            Self::Majority => "majority",
        }
    }

    pub fn is_cnn(self) -> bool {
        matches!(self, Self::Cnn | Self::CnnNoTransfer)
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Self::Cnn),
            "cnn_no_transfer" | "cnn-no-transfer" | "cnn_scratch" | "cnn-scratch" => {
                Ok(Self::CnnNoTransfer)
            }
            "svm" => Ok(Self::Svm),
            "fbcca" => Ok(Self::Fbcca),
            "majority" => Ok(Self::Majority),
            other => Err(Error::Config(format!(
                "unknown classifier {other:?} (cnn|cnn_no_transfer|svm|fbcca|majority)"
            ))),
        }
    }
}

impl std::fmt::Display for Classifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkPreset {
    /// 1×96×64 input, 64–512 channels.
    #[default]
    Default,
    /// 1×24×16 input, 8–32 channels.
    ScaledDown,
    Tiny,
}

impl NetworkPreset {
    pub fn spec(self) -> NetworkSpec {
        match self {
            Self::Default => NetworkSpec::ssvep_default(),
            Self::ScaledDown => NetworkSpec::scaled_down(),
            Self::Tiny => NetworkSpec::tiny(),
        }
    }
}

impl FromStr for NetworkPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Self::Default),
            "scaled_down" | "scaled-down" => Ok(Self::ScaledDown),
            "tiny" => Ok(Self::Tiny),
            other => Err(Error::Config(format!(
                "unknown network {other:?} (default|scaled_down|tiny)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 2.0 / 3.0,
            val_fraction: 1.0 / 3.0,
            stratified: true,
        }
    }
}

/// Everything needed to reproduce a run. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub store: Option<PathBuf>,
    /// Parameter file providing the convolutional prefix for `cnn`.
    pub pretrained: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub classifier: Classifier,
    pub augment: AugmentMode,
    pub network: NetworkPreset,
    /// Freeze transferred tensors during training.
    pub freeze_prefix: bool,
    /// Take CNN patience and epoch budget from the built-in regime table.
    pub use_regime: bool,
    /// Test subjects to evaluate; `None` means every subject in the store.
    pub test_subjects: Option<Vec<u16>>,
    pub split: SplitConfig,
    pub pipeline: PipelineConfig,
    pub fbcca: FbccaConfig,
    pub fbcca_channels: Vec<String>,
    pub svm: SvmTrainConfig,
    pub cnn: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            store: None,
            pretrained: None,
            out_dir: None,
            seed: None,
            classifier: Classifier::default(),
            augment: AugmentMode::default(),
            network: NetworkPreset::default(),
            freeze_prefix: true,
            use_regime: true,
            test_subjects: None,
            split: SplitConfig::default(),
            pipeline: PipelineConfig::default(),
            fbcca: FbccaConfig::default(),
            fbcca_channels: vec![crate::data::OZ.to_string()],
            svm: SvmTrainConfig::default(),
            cnn: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config(format!("{}: not UTF-8", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    /// Seed precedence: `flag`, then the config, then [`SEED_ENV`], then 0.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let seed = match flag.or(self.seed) {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not a u64")))?,
                Err(_) => 0,
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.window.validate()?;
        self.pipeline.stft.validate()?;
        self.svm.validate()?;
        self.cnn.validate()?;
        if self.fbcca_channels.is_empty() {
            return Err(Error::Config("fbcca_channels is empty".into()));
        }
        crate::harness::SplitSpec {
            train_fraction: self.split.train_fraction,
            val_fraction: self.split.val_fraction,
            ..Default::default()
        }
        .validate()
    }
}
