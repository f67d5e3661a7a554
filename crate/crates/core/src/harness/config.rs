//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{AttackConfig, DEFAULT_EPSILON, DEFAULT_MAX_ITERS, DEFAULT_OVERSHOOT};
use crate::codec::QualityList;
use crate::defense::{DefenseConfig, SHIELD_DEFAULT_QUALITIES};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_EMD_DOWNSAMPLE;
use crate::saliency::SaliencySource;

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_overshoot() -> f64 {
    DEFAULT_OVERSHOOT
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_bits() -> u8 {
    3
}

fn default_quality() -> u8 {
    80
}

fn default_shield_qualities() -> Vec<u8> {
    SHIELD_DEFAULT_QUALITIES.to_vec()
}

fn default_emd_downsample() -> usize {
    DEFAULT_EMD_DOWNSAMPLE
}

fn default_train_samples() -> usize {
    600
}

fn default_train_epochs() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum AttackSpec {
    Fgsm {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Deepfool {
        #[serde(default = "default_overshoot")]
        overshoot: f64,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
    },
}

impl AttackSpec {
    pub fn to_config(&self) -> AttackConfig {
        match *self {
            AttackSpec::Fgsm { epsilon } => AttackConfig::Fgsm { epsilon },
            AttackSpec::Deepfool {
                overshoot,
                max_iters,
            } => AttackConfig::DeepFool {
                overshoot,
                max_iters,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum DefenseSpec {
    Bitdepth {
        #[serde(default = "default_bits")]
        bits: u8,
    },
    Jpeg {
        #[serde(default = "default_quality")]
        quality: u8,
    },
    Shield {
        #[serde(default = "default_shield_qualities")]
        qualities: Vec<u8>,
        /// Falls back to the experiment seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Sad {
        qualities: Vec<u8>,
    },
}

impl DefenseSpec {
    pub fn to_config(&self, experiment_seed: u64) -> Result<DefenseConfig> {
        let cfg = match self {
            DefenseSpec::Bitdepth { bits } => DefenseConfig::BitDepth { bits: *bits },
            DefenseSpec::Jpeg { quality } => DefenseConfig::Jpeg { quality: *quality },
            DefenseSpec::Shield { qualities, seed } => DefenseConfig::Shield {
                qualities: QualityList::new(qualities.clone())?,
                seed: seed.unwrap_or(experiment_seed),
            },
            DefenseSpec::Sad { qualities } => DefenseConfig::Sad {
                qualities: QualityList::new(qualities.clone())?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Where saliency maps come from. File templates may use `{id}` (corpus
/// image id) and `{cond}` (slug of the condition the map describes, e.g.
/// `original`, `fgsm`, `fgsm-sad-50-70-90`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SaliencySpec {
    File { path_template: String },
    SpectralResidual,
}

impl SaliencySpec {
    pub fn to_source(&self, base: &Path) -> SaliencySource {
        match self {
            SaliencySpec::File { path_template } => SaliencySource::File {
                path_template: resolve_path(base, path_template).to_string_lossy().into_owned(),
            },
            SaliencySpec::SpectralResidual => SaliencySource::SpectralResidual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Weights file; when absent a shape classifier is trained from the
    /// experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default = "default_train_samples")]
    pub train_samples: usize,
    #[serde(default = "default_train_epochs")]
    pub train_epochs: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            weights: None,
            train_samples: default_train_samples(),
            train_epochs: default_train_epochs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus_dir: PathBuf,
    pub gt_map_template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixation_template: Option<String>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_emd_downsample")]
    pub emd_downsample: usize,
    /// Also write every attacked and cleaned image under `images/`.
    #[serde(default)]
    pub save_images: bool,
    /// Defense-side maps, used by SAD.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense_saliency: Option<SaliencySpec>,
    /// Evaluation-side maps, compared against the ground truth.
    pub eval_saliency: SaliencySpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub defenses: Vec<DefenseSpec>,
}

/// Relative paths in a config file are taken relative to the file.
pub fn resolve_path(base: &Path, p: impl AsRef<Path>) -> PathBuf {
    let p = p.as_ref();
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        for a in &self.attacks {
            a.to_config().validate()?;
        }
        for d in &self.defenses {
            d.to_config(self.seed)?;
        }
        let has_sad = self
            .defenses
            .iter()
            .any(|d| matches!(d, DefenseSpec::Sad { .. }));
        if has_sad && !self.attacks.is_empty() && self.defense_saliency.is_none() {
            return Err(Error::Config(
                "SAD defenses need a [defense_saliency] source".into(),
            ));
        }
        if !self.defenses.is_empty() && self.attacks.is_empty() {
            return Err(Error::Config(
                "defenses are applied to attacked images; add at least one attack".into(),
            ));
        }
        if self.emd_downsample == 0 {
            return Err(Error::Config("emd_downsample must be positive".into()));
        }
        Ok(())
    }
}
