//! The JSON model file holding a target / non-target mixture pair.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassModels, Gmm};
use crate::error::{check_dim, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelClasses {
    pub target: Gmm,
    pub nontarget: Gmm,
}

/// On-disk layout: `{dim, classes: {target, nontarget}}`.
///
/// Floats are written in shortest round-trip form, so load → save is
/// bit-exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    pub classes: ModelClasses,
}

impl ModelFile {
    pub fn from_models(m: &ClassModels) -> Self {
        ModelFile {
            dim: m.dim(),
            classes: ModelClasses {
                target: m.f1.clone(),
                nontarget: m.f0.clone(),
            },
        }
    }

    pub fn into_models(self) -> Result<ClassModels> {
        check_dim(self.dim, self.classes.target.dim())?;
        check_dim(self.dim, self.classes.nontarget.dim())?;
        ClassModels::new(self.classes.nontarget, self.classes.target)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn load_models(path: impl AsRef<Path>) -> Result<ClassModels> {
    ModelFile::from_json(&fs::read_to_string(path)?)?.into_models()
}

pub fn save_models(path: impl AsRef<Path>, models: &ClassModels) -> Result<()> {
    let mut s = ModelFile::from_models(models).to_json()?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
