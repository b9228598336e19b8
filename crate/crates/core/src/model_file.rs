//! Versioned JSON model file shared by the command-line stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{BootstrapSe, FittedModel};
use crate::margins::MarginalModel;
use crate::radial::{ExceedanceSet, ThresholdModel};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProvenance {
    /// SHA-256 of the canonical configuration.
    pub config_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    /// Seconds since the Unix epoch, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub columns: Vec<String>,
    /// Absent when the input was already on exponential margins.
    #[serde(default)]
    pub marginals: Option<Vec<MarginalModel>>,
    #[serde(default)]
    pub threshold: Option<ThresholdModel>,
    #[serde(default)]
    pub exceedances: Option<ExceedanceSet>,
    #[serde(default)]
    pub fits: Vec<FittedModel>,
    #[serde(default)]
    pub selected: Option<usize>,
    /// Block-bootstrap standard errors of the selected fit.
    #[serde(default)]
    pub bootstrap: Option<BootstrapSe>,
    pub provenance: ModelProvenance,
}

impl ModelFile {
    pub fn new(columns: Vec<String>, provenance: ModelProvenance) -> Self {
        Self {
            schema: SCHEMA_VERSION.into(),
            columns,
            marginals: None,
            threshold: None,
            exceedances: None,
            fits: Vec::new(),
            selected: None,
            bootstrap: None,
            provenance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "model schema `{}` is not supported (expected `{SCHEMA_VERSION}`)",
                self.schema
            )));
        }
        if let Some(i) = self.selected {
            if i >= self.fits.len() {
                return Err(Error::Validation(format!("selected index {i} but only {} fits", self.fits.len())));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read model file {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn threshold(&self) -> Result<&ThresholdModel> {
        self.threshold
            .as_ref()
            .ok_or_else(|| Error::Validation("model file has no threshold; run the threshold stage first".into()))
    }

    pub fn exceedances(&self) -> Result<&ExceedanceSet> {
        self.exceedances
            .as_ref()
            .ok_or_else(|| Error::Validation("model file has no exceedances; run the threshold stage first".into()))
    }

    pub fn selected_fit(&self) -> Result<&FittedModel> {
        self.selected
            .map(|i| &self.fits[i])
            .ok_or_else(|| Error::Validation("model file has no selected fit; run the fit stage first".into()))
    }
}
