//! Run configuration: every hyperparameter in one serializable record.
//!
//! The TOML text produced by [`RunConfig::to_toml`] is canonical (fixed field
//! order, every field present), and its SHA-256 is the config fingerprint
//! stored in checkpoints and reports.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::BiLstmConfig;
use crate::erm::{ErmOptions, VerifierConfig};
use crate::error::{Error, Result};
use crate::model::{PrepareOptions, RdmConfig};
use crate::numerics::{Activation, AdamConfig};
use crate::sage::SageConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    /// GraphSAGE depth `K`.
    pub depth: usize,
    /// Per-layer GraphSAGE widths; empty means `2 * hidden` at every layer.
    pub sage_dims: Vec<usize>,
    pub activation: Activation,
    pub normalize: bool,
    /// Zero disables the hidden classifier layer.
    pub mlp_hidden: usize,
    pub use_evidence_label: bool,
    pub root_readout: bool,
    pub freeze_embeddings: bool,
    pub k_docs: usize,
    pub k_evidence: usize,
    pub nei_threshold: f64,
    pub screen_nei: bool,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            embed_dim: crate::text::DEFAULT_EMBED_DIM,
            vocab_size: crate::text::DEFAULT_VOCAB_SIZE,
            max_len: crate::text::DEFAULT_MAX_LEN,
            hidden: 128,
            layers: 2,
            dropout: 0.5,
            lr: 0.0015,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 64,
            depth: 2,
            sage_dims: Vec::new(),
            activation: Activation::Relu,
            normalize: false,
            mlp_hidden: 0,
            use_evidence_label: false,
            root_readout: false,
            freeze_embeddings: true,
            k_docs: 5,
            k_evidence: 5,
            nei_threshold: 0.5,
            screen_nei: false,
            max_epochs: 100,
            patience: 10,
        }
    }
}

fn parse_value(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be > 0")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Defaults, overlaid by `file`, overlaid by `overrides` (`key=value`,
    /// the value in TOML syntax; anything that does not parse as a TOML
    /// value is taken as a bare string).
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("override `{item}` has an empty key")));
            }
            table.insert(key.to_string(), parse_value(value.trim()));
        }
        Self::from_toml_str(&toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        positive("embed_dim", self.embed_dim)?;
        positive("max_len", self.max_len)?;
        positive("batch_size", self.batch_size)?;
        positive("max_epochs", self.max_epochs)?;
        positive("patience", self.patience)?;
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be >= 2".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.nei_threshold) {
            return Err(Error::Config(format!("nei_threshold {} outside [0, 1]", self.nei_threshold)));
        }
        if !self.sage_dims.is_empty() && self.sage_dims.len() != self.depth {
            return Err(Error::Config(format!(
                "sage_dims has {} entries but depth is {}",
                self.sage_dims.len(),
                self.depth
            )));
        }
        self.rdm_config().validate()
    }

    pub fn rdm_config(&self) -> RdmConfig {
        let layer_dims = if self.sage_dims.is_empty() {
            vec![2 * self.hidden; self.depth]
        } else {
            self.sage_dims.clone()
        };
        RdmConfig {
            encoder: BiLstmConfig {
                input_dim: self.embed_dim,
                hidden: self.hidden,
                layers: self.layers,
                dropout: self.dropout,
            },
            sage: SageConfig {
                layer_dims,
                activation: self.activation,
                normalize: self.normalize,
            },
            mlp_hidden: (self.mlp_hidden > 0).then_some(self.mlp_hidden),
            use_evidence_label: self.use_evidence_label,
            root_readout: self.root_readout,
            freeze_embeddings: self.freeze_embeddings,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    /// The verifier shares the sentence encoder shape; `nei_threshold` is
    /// its verdict threshold.
    pub fn verifier_config(&self) -> VerifierConfig {
        VerifierConfig {
            encoder: self.rdm_config().encoder,
            threshold: self.nei_threshold,
        }
    }

    pub fn erm_options(&self) -> ErmOptions {
        ErmOptions {
            k_docs: self.k_docs,
            k_evidence: self.k_evidence,
        }
    }

    pub fn prepare_options(&self) -> PrepareOptions {
        PrepareOptions {
            max_len: self.max_len,
            max_replies: None,
            max_evidence: self.k_evidence,
            screen_nei: self.screen_nei,
        }
    }
}
