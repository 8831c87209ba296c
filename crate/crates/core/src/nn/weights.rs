use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter vector plus the ordered manifest describing it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    manifest: Vec<ParamSpec>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl ModelWeights {
    pub fn zeros(manifest: Vec<ParamSpec>) -> Self {
        let offsets = offsets(&manifest);
        let total = manifest.iter().map(ParamSpec::len).sum();
        Self {
            manifest,
            offsets,
            values: vec![0.0; total],
        }
    }

    /// Rebuilds named tensors from a flat vector.
    pub fn unflatten(manifest: Vec<ParamSpec>, values: Vec<f64>) -> Result<Self> {
        let total: usize = manifest.iter().map(ParamSpec::len).sum();
        if total != values.len() {
            return Err(Error::shape(format!(
                "manifest describes {total} parameters, got {}",
                values.len()
            )));
        }
        let offsets = offsets(&manifest);
        Ok(Self {
            manifest,
            offsets,
            values,
        })
    }

    pub fn flatten(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn manifest(&self) -> &[ParamSpec] {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Slice of the `i`-th tensor in manifest order.
    pub fn tensor(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i]..self.offsets[i] + self.manifest[i].len()]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                values.len()
            )));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }
}

fn offsets(manifest: &[ParamSpec]) -> Vec<usize> {
    manifest
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.len();
            Some(o)
        })
        .collect()
}

/// Manifest for a model of the given shape, in the flat-vector order.
pub fn manifest_for(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let d = cfg.embed_dim;
    let mut m = Vec::new();
    for l in 0..cfg.depth {
        let width = cfg.layer_input_dim(l) + d;
        for k in 0..cfg.cheb_order {
            m.push(ParamSpec {
                name: format!("layer{l}.cheb{k}.weight"),
                shape: vec![width, 4 * d],
            });
        }
        m.push(ParamSpec {
            name: format!("layer{l}.bias"),
            shape: vec![4 * d],
        });
    }
    m.push(ParamSpec {
        name: "head.weight".into(),
        shape: vec![d, cfg.output_dim()],
    });
    m.push(ParamSpec {
        name: "head.bias".into(),
        shape: vec![cfg.output_dim()],
    });
    m
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    config: ModelConfig,
    params: Vec<ParamSpec>,
}

fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (little-endian f64).
pub fn save_checkpoint(
    stem: impl AsRef<Path>,
    cfg: &ModelConfig,
    weights: &ModelWeights,
) -> Result<()> {
    let (json, bin) = checkpoint_paths(stem.as_ref());
    let manifest = CheckpointManifest {
        config: *cfg,
        params: weights.manifest().to_vec(),
    };
    fs::write(&json, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&json, e))?;
    let bytes: Vec<u8> = weights
        .flatten()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    Ok(())
}

/// Reads a checkpoint, checking the stored manifest against the config.
pub fn load_checkpoint(stem: impl AsRef<Path>) -> Result<(ModelConfig, ModelWeights)> {
    let (json, bin) = checkpoint_paths(stem.as_ref());
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    manifest.config.validate()?;
    if manifest.params != manifest_for(&manifest.config) {
        return Err(Error::shape(
            "checkpoint manifest does not match its model config".to_string(),
        ));
    }
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Data(
            "checkpoint payload is not a whole number of f64".into(),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((
        manifest.config,
        ModelWeights::unflatten(manifest.params, values)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sizes() {
        let cfg = ModelConfig {
            embed_dim: 4,
            depth: 2,
            cheb_order: 2,
            history: 3,
            horizon: 1,
            feature_dim: 1,
        };
        let m = manifest_for(&cfg);
        let names: Vec<_> = m.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "layer0.cheb0.weight",
                "layer0.cheb1.weight",
                "layer0.bias",
                "layer1.cheb0.weight",
                "layer1.cheb1.weight",
                "layer1.bias",
                "head.weight",
                "head.bias"
            ]
        );
        let total: usize = m.iter().map(ParamSpec::len).sum();
        assert_eq!(total, 2 * 5 * 16 + 16 + 2 * 8 * 16 + 16 + 4 + 1);
    }

    #[test]
    fn unflatten_checks_length() {
        let m = manifest_for(&ModelConfig::default());
        assert!(ModelWeights::unflatten(m, vec![0.0; 3]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig {
            embed_dim: 3,
            depth: 1,
            history: 2,
            ..ModelConfig::default()
        };
        let m = manifest_for(&cfg);
        let n: usize = m.iter().map(ParamSpec::len).sum();
        let w = ModelWeights::unflatten(m, (0..n).map(|i| i as f64 * 0.1 - 1.0 / 3.0).collect())
            .unwrap();
        let stem = dir.path().join("model");
        save_checkpoint(&stem, &cfg, &w).unwrap();
        let (cfg2, w2) = load_checkpoint(&stem).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(w2, w);
    }

    #[test]
    fn checkpoint_manifest_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig {
            embed_dim: 3,
            depth: 1,
            ..ModelConfig::default()
        };
        let w = ModelWeights::zeros(manifest_for(&cfg));
        let stem = dir.path().join("model");
        save_checkpoint(&stem, &cfg, &w).unwrap();
        let json = stem.with_extension("json");
        let text = std::fs::read_to_string(&json)
            .unwrap()
            .replace("\"embed_dim\": 3", "\"embed_dim\": 4");
        std::fs::write(&json, text).unwrap();
        assert!(load_checkpoint(&stem).is_err());
    }
}
