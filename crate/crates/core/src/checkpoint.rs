//! JSON checkpoints shared by detectors, engines and policies.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diff::{ParamStore, StoredTensor, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint holds a {found}, expected a {expected}")]
    Kind { expected: String, found: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint was trained on graph {found}, current graph is {expected}")]
    GraphMismatch { expected: String, found: String },
    #[error("checkpoint tensors: {0}")]
    Tensors(String),
}

/// Envelope: kind, version, configuration, optional graph hash and named tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    pub version: u32,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_hash: Option<String>,
    pub tensors: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn new(kind: &str, config: &impl Serialize) -> Self {
        Self {
            kind: kind.to_string(),
            version: CHECKPOINT_VERSION,
            config: serde_json::to_value(config).expect("serializable config"),
            graph_hash: None,
            tensors: BTreeMap::new(),
        }
    }

    pub fn with_graph(mut self, hash: String) -> Self {
        self.graph_hash = Some(hash);
        self
    }

    pub fn config<T: DeserializeOwned>(&self) -> Result<T, CheckpointError> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn insert(&mut self, name: &str, t: &Tensor) {
        let (r, c) = t.dim();
        self.tensors.insert(name.to_string(), StoredTensor { shape: [r, c], values: t.iter().copied().collect() });
    }

    pub fn insert_row(&mut self, name: &str, v: &[f64]) {
        self.tensors.insert(name.to_string(), StoredTensor { shape: [1, v.len()], values: v.to_vec() });
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor, CheckpointError> {
        let s = self.tensors.get(name).ok_or_else(|| CheckpointError::Tensors(format!("missing {name}")))?;
        Tensor::from_shape_vec((s.shape[0], s.shape[1]), s.values.clone())
            .map_err(|_| CheckpointError::Tensors(format!("{name}: {} values for shape {:?}", s.values.len(), s.shape)))
    }

    pub fn row(&self, name: &str) -> Result<Vec<f64>, CheckpointError> {
        Ok(self.tensor(name)?.iter().copied().collect())
    }

    /// Stores every parameter under `prefix/`.
    pub fn insert_params(&mut self, prefix: &str, params: &ParamStore) {
        for (n, t) in params.to_stored() {
            self.tensors.insert(format!("{prefix}/{n}"), t);
        }
    }

    /// Loads parameters stored under `prefix/` into a store of identical layout.
    pub fn load_params(&self, prefix: &str, params: &mut ParamStore) -> Result<(), CheckpointError> {
        let p = format!("{prefix}/");
        let sub: BTreeMap<String, StoredTensor> = self
            .tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|n| (n.to_string(), v.clone())))
            .collect();
        params.load_stored(&sub).map_err(|e| CheckpointError::Tensors(format!("{prefix}: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        std::fs::write(path, serde_json::to_string(self)?).map_err(io)
    }

    /// Reads a checkpoint and checks its kind and version.
    pub fn load(path: &Path, kind: &str) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.kind != kind {
            return Err(CheckpointError::Kind { expected: kind.into(), found: ck.kind });
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(ck.version));
        }
        Ok(ck)
    }

    pub fn check_graph(&self, hash: &str) -> Result<(), CheckpointError> {
        match &self.graph_hash {
            Some(h) if h == hash => Ok(()),
            other => Err(CheckpointError::GraphMismatch {
                expected: hash.to_string(),
                found: other.clone().unwrap_or_else(|| "none".into()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut params = ParamStore::new();
        params.add("w", Tensor::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 0.1 + 0.2]).unwrap());
        let mut ck = Checkpoint::new("test", &serde_json::json!({"a": 1})).with_graph("abc".into());
        ck.insert_params("net", &params);
        ck.insert_row("mean", &[0.5, -1.0]);
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path, "test").unwrap();
        assert_eq!(back, ck);
        let mut fresh = ParamStore::new();
        fresh.add("w", Tensor::zeros((2, 2)));
        back.load_params("net", &mut fresh).unwrap();
        assert_eq!(fresh.get(0).value, params.get(0).value);
        assert!(back.check_graph("abc").is_ok());
        assert!(matches!(back.check_graph("xyz"), Err(CheckpointError::GraphMismatch { .. })));
        assert!(matches!(Checkpoint::load(&path, "other"), Err(CheckpointError::Kind { .. })));
    }
}
