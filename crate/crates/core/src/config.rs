//! Pipeline configuration read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::FitConfig;
use crate::gauges::{additive_mix, min_mix, Family, Gauge, StructureSpec};
use crate::radial::WindowSpec;

/// One candidate gauge. `structure` uses 0-based indices; mixes list their
/// parts under `components`, and additive mixes take `weights` for all but
/// the last component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<CandidateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl CandidateSpec {
    pub fn family(family: Family) -> Self {
        Self { family, start: None, structure: None, components: Vec::new(), weights: None }
    }

    /// Starting gauge for dimension `d`.
    pub fn template(&self, d: usize) -> Result<Gauge> {
        match self.family {
            Family::AdditiveMix | Family::MinMix => {
                if self.components.len() < 2 {
                    return Err(Error::Validation(format!("{} needs at least two components", self.family)));
                }
                let comps = self.components.iter().map(|c| c.template(d)).collect::<Result<Vec<_>>>()?;
                if self.family == Family::MinMix {
                    return min_mix(comps);
                }
                let weights = self.weights.clone().unwrap_or_else(|| vec![1.0; comps.len() - 1]);
                additive_mix(comps, &weights)
            }
            Family::AsymLogistic => {
                let s = StructureSpec::new(
                    self.structure
                        .clone()
                        .ok_or_else(|| Error::Validation("asym_logistic candidate needs a structure".into()))?,
                );
                let start = self.start.clone().unwrap_or_else(|| Gauge::default_params(self.family, d, Some(&s)));
                Gauge::asym_logistic(d, s, start)
            }
            f => match &self.start {
                Some(p) => Gauge::new(f, d, p.clone()),
                None => Gauge::with_defaults(f, d, None),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSettings {
    pub block_len: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    /// Input columns are already on standard exponential margins.
    pub exponential_input: bool,
    pub tail_quantile: f64,
    pub tau: f64,
    pub seed: u64,
    /// Record the wall-clock time in the model file.
    pub timestamps: bool,
    pub window: WindowSpec,
    pub fit: FitConfig,
    pub candidates: Vec<CandidateSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSettings>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            exponential_input: false,
            tail_quantile: 0.95,
            tau: 0.95,
            seed: 1,
            timestamps: false,
            window: WindowSpec::default(),
            fit: FitConfig::default(),
            candidates: [Family::Logistic, Family::InvertedLogistic, Family::Gaussian]
                .into_iter()
                .map(CandidateSpec::family)
                .collect(),
            bootstrap: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("tail_quantile", self.tail_quantile), ("tau", self.tau)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Validation(format!("{name} must lie in (0,1), got {p}")));
            }
        }
        if self.candidates.is_empty() {
            return Err(Error::Validation("at least one candidate gauge is required".into()));
        }
        if let Some(b) = &self.bootstrap {
            if b.block_len == 0 || b.replicates < 50 {
                return Err(Error::Validation("bootstrap needs block_len >= 1 and replicates >= 50".into()));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Seed for pipeline stage `stage`, derived from the master seed.
pub fn stage_seed(master: u64, stage: u64) -> u64 {
    master.wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub mod stages {
    pub const BOOTSTRAP: u64 = 1;
    pub const SIMULATE: u64 = 2;
    pub const PROB: u64 = 3;
    pub const CHI: u64 = 4;
}
