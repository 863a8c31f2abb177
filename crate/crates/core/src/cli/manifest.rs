//! Corpus manifest written by `countem gen` and read by every later stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::events::EventTrack;
use crate::io::read_json;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const AUGMENT_FILE: &str = "augment.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub track_id: String,
    pub split: Split,
    pub index: usize,
    /// Paths are relative to the manifest's directory.
    pub audio: String,
    pub events: String,
    pub duration_s: f64,
    pub notes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub sample_rate: u32,
    pub pitch_count: usize,
    pub tracks: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentEntry {
    pub track_id: String,
    pub shift_semitones: f64,
    pub audio: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AugmentManifest {
    pub copies: Vec<AugmentEntry>,
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(path).map_err(|e| Error::io(path, e))?;
        let mut seen = std::collections::HashSet::new();
        for t in &manifest.tracks {
            if !seen.insert(t.track_id.as_str()) {
                return Err(Error::Invalid(format!(
                    "{}: duplicate track id {}",
                    path.display(),
                    t.track_id
                )));
            }
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, manifest })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.manifest.tracks.iter().filter(move |t| t.split == split)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn read_events(&self, entry: &ManifestEntry) -> Result<EventTrack> {
        let path = self.resolve(&entry.events);
        read_json(&path).map_err(|e| Error::io(&path, e))
    }

    /// Shifted copies listed next to the manifest; empty when there is no
    /// augmentation file.
    pub fn augment(&self) -> Result<AugmentManifest> {
        let path = self.root.join(AUGMENT_FILE);
        if !path.exists() {
            return Ok(AugmentManifest::default());
        }
        read_json(&path).map_err(|e| Error::io(&path, e))
    }
}
