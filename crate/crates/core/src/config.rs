//! Pipeline configuration: a TOML file with one section per stage, plus
//! the semantic hash stamped into every artifact.
//!
//! The hash covers every section except `[paths]`, so artifacts stay valid
//! when a workdir moves but are refused after any parameter change.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binio::HASH_LEN;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::lda::GibbsConfig;
use crate::network::{NetworkHyper, FC_LAYERS};
use crate::synth::SynthConfig;
use crate::training::TrainConfig;
use crate::verify::CvConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub lexicon: PathBuf,
    pub articles: PathBuf,
    pub companies: PathBuf,
    pub ratings: PathBuf,
    pub investigations: PathBuf,
    pub workdir: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            lexicon: "data/lexicon.txt".into(),
            articles: "data/articles.jsonl".into(),
            companies: "data/companies.csv".into(),
            ratings: "data/ratings.csv".into(),
            investigations: "data/investigations.csv".into(),
            workdir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    pub topics: usize,
    /// Document-topic prior; omitted means 50 / topics.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LdaSection {
    fn default() -> Self {
        Self {
            topics: 15,
            alpha: None,
            beta: 0.01,
            iterations: 200,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    /// Scale constant applied before tanh in the image construction.
    pub scale: f64,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub conv_filters: usize,
    pub widths: [usize; FC_LAYERS],
    pub seed: u64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            conv_filters: 4,
            widths: [64, 32, 16, 16, 16, 8],
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub holdout_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.5,
            seed: 13,
            shuffle: true,
            holdout_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub window: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            window: 200,
            folds: 5,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub seed: u64,
    pub topics: usize,
    pub vocab: usize,
    pub docs: usize,
    pub doc_length: usize,
    pub companies: usize,
    pub rated: usize,
    pub signal_strength: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            seed: 42,
            topics: 6,
            vocab: 300,
            docs: 2000,
            doc_length: 40,
            companies: 300,
            rated: 60,
            signal_strength: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsSection,
    pub lda: LdaSection,
    pub features: FeaturesSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub verify: VerifySection,
    pub synth: SynthSection,
}

pub const WORKDIR_ENV: &str = "CREDSCOPE_WORKDIR";

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// All seeds replaced by one value; used by the global --seed flag.
    pub fn override_seed(&mut self, seed: u64) {
        self.lda.seed = seed;
        self.network.seed = seed;
        self.training.seed = seed;
        self.verify.seed = seed;
        self.synth.seed = seed;
    }

    pub fn workdir(&self) -> PathBuf {
        if let Some(dir) = &self.paths.workdir {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var(WORKDIR_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from("work")
    }

    /// SHA-256 over the canonical JSON of every non-path section.
    pub fn semantic_hash(&self) -> [u8; HASH_LEN] {
        #[derive(Serialize)]
        struct Semantic<'a> {
            lda: &'a LdaSection,
            features: &'a FeaturesSection,
            network: &'a NetworkSection,
            training: &'a TrainingSection,
            verify: &'a VerifySection,
            synth: &'a SynthSection,
        }
        let json = serde_json::to_string(&Semantic {
            lda: &self.lda,
            features: &self.features,
            network: &self.network,
            training: &self.training,
            verify: &self.verify,
            synth: &self.synth,
        })
        .expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = [0u8; HASH_LEN];
        out.copy_from_slice(&digest);
        out
    }

    pub fn hash_hex(&self) -> String {
        hex(&self.semantic_hash())
    }

    pub fn gibbs_config(&self) -> GibbsConfig {
        GibbsConfig {
            topics: self.lda.topics,
            alpha: self.lda.alpha.unwrap_or(50.0 / self.lda.topics as f64),
            beta: self.lda.beta,
            iterations: self.lda.iterations,
            seed: self.lda.seed,
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            scale: self.features.scale,
        }
    }

    pub fn network_hyper(&self) -> NetworkHyper {
        NetworkHyper {
            image_rows: self.lda.topics,
            conv_filters: self.network.conv_filters,
            widths: self.network.widths,
            seed: self.network.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.training.epochs,
            learning_rate: self.training.learning_rate,
            seed: self.training.seed,
            shuffle: self.training.shuffle,
            holdout_fraction: self.training.holdout_fraction,
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            folds: self.verify.folds,
            window: self.verify.window,
            seed: self.verify.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.synth.seed,
            topics: self.synth.topics,
            vocab: self.synth.vocab,
            docs: self.synth.docs,
            doc_length: self.synth.doc_length,
            companies: self.synth.companies,
            rated: self.synth.rated,
            signal_strength: self.synth.signal_strength,
        }
    }
}

pub fn hex(hash: &[u8; HASH_LEN]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}
