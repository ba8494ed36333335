//! The target-model registry: named checkpoints, loaded lazily, never
//! sharing training data with the surrogate under evaluation.

use crate::error::{BenchError, Result};
use datapipe::{FewShotManifest, Provenance};
use nets::Model;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetEntry {
    pub name: String,
    pub checkpoint: PathBuf,
    pub spec_hash: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TargetRegistry {
    pub targets: Vec<TargetEntry>,
}

impl TargetRegistry {
    pub fn add(&mut self, name: &str, checkpoint: PathBuf) -> Result<()> {
        if self.targets.iter().any(|t| t.name == name) {
            return Err(BenchError::DuplicateTarget(name.to_string()));
        }
        let spec_hash = nets::checkpoint::peek_spec_hash(&checkpoint)?;
        self.targets.push(TargetEntry { name: name.to_string(), checkpoint, spec_hash });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(self).expect("registry serializes"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| BenchError::Invalid(e.to_string()))
    }

    pub fn load_model(&self, name: &str) -> Result<Model> {
        let entry = self
            .targets
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| BenchError::Invalid(format!("unknown target {name}")))?;
        Ok(nets::load_checkpoint(&entry.checkpoint)?)
    }

    /// Provenance sidecar written next to every target checkpoint.
    pub fn provenance_path(checkpoint: &Path) -> PathBuf {
        checkpoint.with_extension("provenance.json")
    }

    pub fn write_provenance(checkpoint: &Path, prov: &Provenance) -> Result<()> {
        let path = Self::provenance_path(checkpoint);
        std::fs::write(&path, serde_json::to_vec_pretty(prov).expect("provenance serializes"))?;
        Ok(())
    }

    /// Enforce the no-box separation: every registered target must carry a
    /// provenance record disjoint from the surrogate's few-shot manifest.
    pub fn check_disjoint(&self, few_shot: &FewShotManifest) -> Result<()> {
        let fs_prov = few_shot.to_provenance();
        for t in &self.targets {
            let path = Self::provenance_path(&t.checkpoint);
            let bytes = std::fs::read(&path)
                .map_err(|_| BenchError::ProvenanceMissing { target: t.name.clone() })?;
            let prov: Provenance = serde_json::from_slice(&bytes)
                .map_err(|_| BenchError::ProvenanceMissing { target: t.name.clone() })?;
            if prov.overlaps(&fs_prov) {
                return Err(BenchError::ProvenanceOverlap { target: t.name.clone() });
            }
        }
        Ok(())
    }
}
