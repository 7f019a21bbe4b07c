//! Self-describing model files with content hashes and lineage checks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use demoqual_core::critic::CriticModel;
use demoqual_core::encoder::EncoderModel;
use demoqual_core::gmm::QualityGmm;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MODEL_FORMAT: &str = "demoqual-model";
pub const MODEL_VERSION: u32 = 1;

pub const ENCODER_FILE: &str = "encoder.json";
pub const CRITIC_FILE: &str = "critic.json";
pub const GMM_FILE: &str = "gmm.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a trajectory-id set, independent of order and labels.
pub fn id_set_hash<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut v: Vec<&str> = ids.into_iter().collect();
    v.sort_unstable();
    sha256_hex(v.join("\n").as_bytes())
}

/// Names of input artifacts mapped to their content hashes.
pub type Lineage = BTreeMap<String, String>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact<M> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub tiers: Vec<String>,
    pub run_config: RunConfig,
    pub inputs: Lineage,
    pub content_hash: String,
    pub model: M,
}

fn model_hash<M: Serialize>(model: &M) -> String {
    sha256_hex(serde_json::to_string(model).expect("model serializes").as_bytes())
}

impl<M: Serialize + DeserializeOwned> Artifact<M> {
    pub fn new(kind: &str, tiers: Vec<String>, run_config: &RunConfig, inputs: Lineage, model: M) -> Self {
        Artifact {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: kind.into(),
            tiers,
            run_config: run_config.clone(),
            inputs,
            content_hash: model_hash(&model),
            model,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, kind: &str) -> Result<Self> {
        let a: Artifact<M> = serde_json::from_str(text).map_err(|e| CliError::Data(format!("{kind} artifact: {e}")))?;
        if a.format != MODEL_FORMAT || a.version != MODEL_VERSION || a.kind != kind {
            return Err(CliError::Data(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION} `{kind}`, found {} v{} `{}`",
                a.format, a.version, a.kind
            )));
        }
        let h = model_hash(&a.model);
        if h != a.content_hash {
            return Err(CliError::Data(format!(
                "{kind} content hash mismatch: recorded {}, computed {h}",
                a.content_hash
            )));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, kind)
    }
}

/// Encoder, critic and mixture loaded together with their lineage verified.
pub struct Models {
    pub encoder: Artifact<EncoderModel>,
    pub critic: Artifact<CriticModel>,
    pub gmm: Artifact<QualityGmm>,
}

fn expect_parent(child: &str, inputs: &Lineage, parent: &str, hash: &str) -> Result<()> {
    match inputs.get(parent) {
        Some(h) if h == hash => Ok(()),
        Some(h) => Err(CliError::Data(format!(
            "lineage mismatch: {child} was built from {parent} {h}, found {hash}"
        ))),
        None => Err(CliError::Data(format!("lineage mismatch: {child} does not record a {parent}"))),
    }
}

impl Models {
    pub fn check(&self) -> Result<()> {
        let (e, c, g) = (&self.encoder, &self.critic, &self.gmm);
        expect_parent("critic", &c.inputs, "encoder", &e.content_hash)?;
        expect_parent("gmm", &g.inputs, "encoder", &e.content_hash)?;
        expect_parent("gmm", &g.inputs, "critic", &c.content_hash)?;
        if e.tiers != c.tiers || e.tiers != g.tiers {
            return Err(CliError::Data("lineage mismatch: tier ladders differ between models".into()));
        }
        e.model.validate()?;
        c.model.validate()?;
        g.model.validate()?;
        if c.model.latent_dim != e.model.latent_dim() {
            return Err(CliError::Data("critic input does not match encoder latent size".into()));
        }
        if g.model.components.len() != e.tiers.len() {
            return Err(CliError::Data("mixture components do not match the tier ladder".into()));
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = Models {
            encoder: Artifact::load(&dir.join(ENCODER_FILE), "encoder")?,
            critic: Artifact::load(&dir.join(CRITIC_FILE), "critic")?,
            gmm: Artifact::load(&dir.join(GMM_FILE), "gmm")?,
        };
        m.check()?;
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let paths = [ENCODER_FILE, CRITIC_FILE, GMM_FILE].map(|f| dir.join(f));
        self.encoder.save(&paths[0])?;
        self.critic.save(&paths[1])?;
        self.gmm.save(&paths[2])?;
        Ok(paths.to_vec())
    }

    pub fn lineage(&self) -> Lineage {
        Lineage::from([
            ("encoder".to_string(), self.encoder.content_hash.clone()),
            ("critic".to_string(), self.critic.content_hash.clone()),
            ("gmm".to_string(), self.gmm.content_hash.clone()),
        ])
    }
}
