use std::path::Path;

use serde::{Deserialize, Serialize};

use super::families::{registry_get, RegistryEntry};
use super::SwitchingDiffusion;
use crate::error::{Error, Result};

/// Model config file:
///
/// ```json
/// {"name": "switched_ou", "params": {"theta": 1.0}, "dim": 1,
///  "brownian_dim": 1, "rate_bound": 6.0, "truncation_hint": 30}
/// ```
///
/// `dim` and `brownian_dim` are checked against the family when present;
/// `rate_bound` may raise (never lower) the family's uniform bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub brownian_dim: Option<usize>,
    #[serde(default)]
    pub rate_bound: Option<f64>,
    #[serde(default)]
    pub truncation_hint: Option<usize>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<RegistryEntry> {
        let mut entry = registry_get(&self.name, &self.params)?;
        let m = &entry.model;
        if let Some(d) = self.dim {
            if d != m.dim() {
                return Err(Error::Config(format!(
                    "`{}` has state dimension {}, config says {d}",
                    self.name,
                    m.dim()
                )));
            }
        }
        if let Some(d) = self.brownian_dim {
            if d != m.brownian_dim() {
                return Err(Error::Config(format!(
                    "`{}` has {} Brownian components, config says {d}",
                    self.name,
                    m.brownian_dim()
                )));
            }
        }
        if let Some(bound) = self.rate_bound {
            let raised = (*entry.model).clone().with_rate_bound(bound).map_err(|_| {
                Error::Config(format!(
                    "rate_bound {bound} is below the family bound {}",
                    m.rate_bound()
                ))
            })?;
            entry.model = std::sync::Arc::new(raised);
        }
        Ok(entry)
    }

    pub fn truncation(&self, default: usize) -> usize {
        self.truncation_hint.unwrap_or(default)
    }
}

/// Reads a model config; returns the parsed config and its raw bytes (for
/// hashing into run metadata).
pub fn load_model_config(path: &Path) -> Result<(ModelConfig, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let cfg: ModelConfig = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_checks() {
        let ok: ModelConfig =
            serde_json::from_str(r#"{"name": "linear_2d", "dim": 2, "brownian_dim": 2}"#).unwrap();
        assert!(ok.build().is_ok());
        let bad: ModelConfig = serde_json::from_str(r#"{"name": "linear_2d", "dim": 1}"#).unwrap();
        assert!(matches!(bad.build(), Err(Error::Config(_))));
    }

    #[test]
    fn rate_bound_override() {
        let up: ModelConfig =
            serde_json::from_str(r#"{"name": "switched_ou", "rate_bound": 10.0}"#).unwrap();
        assert_eq!(up.build().unwrap().model.rate_bound(), 10.0);
        let down: ModelConfig =
            serde_json::from_str(r#"{"name": "switched_ou", "rate_bound": 1.0}"#).unwrap();
        assert!(down.build().is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_model_config(Path::new("/definitely/not/here.json")).unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.json"));
    }
}
