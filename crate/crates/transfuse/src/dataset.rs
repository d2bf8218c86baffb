use std::fs;
use std::path::{Path, PathBuf};

use transfuse_core::image::preprocess;
use transfuse_core::Image;

use crate::error::{Error, Result};
use crate::io::{has_image_extension, load_image};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    /// `(height, width)` as stored on disk.
    pub original_size: (usize, usize),
}

/// A file with an image extension that failed to decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub target_size: usize,
    /// Sorted by path.
    pub entries: Vec<ManifestEntry>,
    pub skipped: Vec<SkippedFile>,
}

/// Lists every decodable PNG/PGM directly inside `dir`, sorted by path.
/// Undecodable image files are reported in `skipped`; other files are
/// ignored.
pub fn scan_dataset(dir: &Path, target_size: usize) -> Result<DatasetManifest> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && has_image_extension(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        match load_image(&path) {
            Ok(img) => entries.push(ManifestEntry { path, original_size: img.dims() }),
            Err(e) => skipped.push(SkippedFile { path, reason: e.to_string() }),
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset(dir.to_path_buf()));
    }
    Ok(DatasetManifest { root: dir.to_path_buf(), target_size, entries, skipped })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads every entry resized to `target_size × target_size`.
    pub fn load_images(&self) -> Result<Vec<Image>> {
        self.entries
            .iter()
            .map(|e| Ok(preprocess(&load_image(&e.path)?, self.target_size)?))
            .collect()
    }
}
