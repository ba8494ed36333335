//! Per-epoch training records, persisted as JSON lines.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f32,
    pub loss: f32,
    pub acc: f32,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn push(&mut self, s: EpochStats) {
        self.epochs.push(s);
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.epochs {
            serde_json::to_writer(&mut f, e).expect("stats serialize");
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut h = TrainHistory::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            h.epochs.push(serde_json::from_str(line).map_err(std::io::Error::other)?);
        }
        Ok(h)
    }
}
