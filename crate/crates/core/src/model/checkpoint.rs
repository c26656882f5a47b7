//! JSON checkpoints. Parameters are written as hex bit patterns so a
//! save/load round trip reproduces every value exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SourceModel, TransmeterModel};
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::Mlp;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Source,
    Transmeter,
}

/// One named block of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleRecord {
    pub role: String,
    pub net: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub kind: CheckpointKind,
    /// Dataset the model was trained on, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub d_s: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_t: Option<usize>,
    #[serde(with = "crate::hexfloat::scalar")]
    pub alpha: f64,
    #[serde(with = "crate::hexfloat::scalar")]
    pub beta: f64,
    #[serde(default)]
    pub flip: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormStats>,
    pub modules: Vec<ModuleRecord>,
}

const SOURCE_ROLE: &str = "source_classifier";
const ROLES: [&str; 4] = ["encoder", "decoder", "label_predictor", "domain_classifier"];

impl Checkpoint {
    pub fn from_source(model: &SourceModel, dataset: Option<&str>, seed: u64) -> Self {
        let mut net = model.net.clone();
        net.clear_cache();
        Self {
            format: CHECKPOINT_FORMAT,
            kind: CheckpointKind::Source,
            dataset: dataset.map(str::to_owned),
            d_s: model.input_dim(),
            d_t: None,
            alpha: 0.0,
            beta: 0.0,
            flip: false,
            seed,
            normalization: model.normalization.clone(),
            modules: vec![ModuleRecord {
                role: SOURCE_ROLE.into(),
                net,
            }],
        }
    }

    pub fn from_transmeter(model: &TransmeterModel, flip: bool, seed: u64) -> Self {
        let mut m = model.clone();
        m.clear_cache();
        let nets = [m.encoder, m.decoder, m.label_predictor, m.domain_classifier];
        Self {
            format: CHECKPOINT_FORMAT,
            kind: CheckpointKind::Transmeter,
            dataset: None,
            d_s: model.d_s(),
            d_t: Some(model.d_t()),
            alpha: model.alpha,
            beta: model.beta,
            flip,
            seed,
            normalization: None,
            modules: ROLES
                .iter()
                .zip(nets)
                .map(|(r, net)| ModuleRecord {
                    role: (*r).into(),
                    net,
                })
                .collect(),
        }
    }

    fn module(&self, role: &str) -> Result<&Mlp> {
        let mut hits = self.modules.iter().filter(|m| m.role == role);
        let first = hits
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("missing module `{role}`")))?;
        if hits.next().is_some() {
            return Err(Error::Checkpoint(format!("duplicate module `{role}`")));
        }
        first.net.validate().map_err(|e| Error::Checkpoint(format!("module `{role}`: {e}")))?;
        Ok(&first.net)
    }

    fn check_header(&self, kind: CheckpointKind) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format version {}", self.format)));
        }
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)));
        }
        Ok(())
    }

    pub fn to_source(&self) -> Result<SourceModel> {
        self.check_header(CheckpointKind::Source)?;
        if self.modules.len() != 1 {
            return Err(Error::Checkpoint("source checkpoint must hold exactly one module".into()));
        }
        let net = self.module(SOURCE_ROLE)?.clone();
        if net.input_dim() != self.d_s || net.output_dim() != 1 {
            return Err(Error::Checkpoint(format!(
                "source network is {}→{}, header says {}→1",
                net.input_dim(),
                net.output_dim(),
                self.d_s
            )));
        }
        if let Some(n) = &self.normalization {
            if n.dim() != self.d_s {
                return Err(Error::Checkpoint("normalization width differs from d_s".into()));
            }
        }
        Ok(SourceModel {
            net,
            normalization: self.normalization.clone(),
        })
    }

    pub fn to_transmeter(&self) -> Result<TransmeterModel> {
        self.check_header(CheckpointKind::Transmeter)?;
        if self.modules.len() != ROLES.len() {
            return Err(Error::Checkpoint("transfer checkpoint must hold four modules".into()));
        }
        let m = TransmeterModel::from_parts(
            self.module(ROLES[0])?.clone(),
            self.module(ROLES[1])?.clone(),
            self.module(ROLES[2])?.clone(),
            self.module(ROLES[3])?.clone(),
            self.alpha,
            self.beta,
        )
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if Some(m.d_t()) != self.d_t || m.d_s() != self.d_s {
            return Err(Error::Checkpoint("module widths disagree with the header".into()));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }
}
