use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_annotations, Frame, Video};
use crate::geometry::VideoMeta;
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One video: a directory of numbered PNG frames plus an annotation CSV.
/// Paths are relative to the index file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub video_id: String,
    pub path: PathBuf,
    pub annotation_path: PathBuf,
    pub meta: VideoMeta,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    #[serde(skip)]
    pub root: PathBuf,
    pub entries: Vec<IndexEntry>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

impl DatasetIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(INDEX_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let mut index: DatasetIndex =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        index.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        index.validate()?;
        Ok(index)
    }

    pub fn save(&self) -> Result<()> {
        let path = self.root.join(INDEX_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("index", e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            e.meta.validate()?;
            if !seen.insert((e.split, e.video_id.as_str())) {
                return Err(Error::Config(format!("duplicate video id {} in {:?} split", e.video_id, e.split)));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &IndexEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn load_video(&self, entry: &IndexEntry) -> Result<Video> {
        let dir = self.root.join(&entry.path);
        let frames = (0..entry.meta.frame_count)
            .map(|i| Frame::load(&dir.join(frame_file_name(i))))
            .collect::<Result<Vec<_>>>()?;
        let annotations = load_annotations(&self.root.join(&entry.annotation_path), &entry.meta)?;
        Ok(Video { meta: entry.meta.clone(), frames, annotations })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Video>> {
        self.split(split).map(|e| self.load_video(e)).collect()
    }
}
