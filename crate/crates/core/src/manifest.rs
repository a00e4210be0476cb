//! Inventory of a directory-per-class image corpus.
//!
//! Every immediate subdirectory of the root is one class; files inside it are
//! found recursively. Within a class, entries are ordered by the byte-wise
//! lexicographic order of their root-relative path, and that order defines the
//! class-local indices that combination ranks refer to.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use image::DynamicImage;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    #[serde(rename = "class")]
    pub class_name: String,
    pub index: usize,
    #[serde(rename = "path")]
    pub relative_path: String,
    pub width: u32,
    pub height: u32,
    /// Hex SHA-256 of the decoded pixel buffer, see [`pixel_digest`].
    #[serde(rename = "digest")]
    pub content_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassImages {
    pub name: String,
    pub entries: Vec<ImageEntry>,
}

impl ClassImages {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Digest over the ordered member digests; keys similarity caches.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update([0u8]);
        for e in &self.entries {
            h.update(e.relative_path.as_bytes());
            h.update([0u8]);
            h.update(e.content_digest.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "ManifestFile", try_from = "ManifestFile")]
pub struct DatasetManifest {
    pub root: String,
    pub classes: Vec<ClassImages>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub tool_version: String,
}

/// On-disk shape: a flat, ordered entry array plus a class index.
#[derive(Serialize, Deserialize)]
struct ManifestFile {
    root: String,
    tool_version: String,
    created_at: u64,
    classes: Vec<ClassCount>,
    entries: Vec<ImageEntry>,
}

#[derive(Serialize, Deserialize)]
struct ClassCount {
    name: String,
    count: usize,
}

impl From<DatasetManifest> for ManifestFile {
    fn from(m: DatasetManifest) -> Self {
        let classes = m.classes.iter().map(|c| ClassCount { name: c.name.clone(), count: c.len() }).collect();
        let entries = m.classes.into_iter().flat_map(|c| c.entries).collect();
        ManifestFile { root: m.root, tool_version: m.tool_version, created_at: m.created_at, classes, entries }
    }
}

impl TryFrom<ManifestFile> for DatasetManifest {
    type Error = String;

    fn try_from(f: ManifestFile) -> std::result::Result<Self, String> {
        let mut entries = f.entries.into_iter();
        let mut classes = Vec::with_capacity(f.classes.len());
        for cc in f.classes {
            let members: Vec<ImageEntry> = entries.by_ref().take(cc.count).collect();
            if members.len() != cc.count {
                return Err(format!("class {} declares {} entries, found {}", cc.name, cc.count, members.len()));
            }
            for (i, e) in members.iter().enumerate() {
                if e.class_name != cc.name || e.index != i {
                    return Err(format!("entry {} out of order for class {}", e.relative_path, cc.name));
                }
            }
            classes.push(ClassImages { name: cc.name, entries: members });
        }
        if entries.next().is_some() {
            return Err("entries beyond the declared class counts".into());
        }
        let m = DatasetManifest { root: f.root, classes, created_at: f.created_at, tool_version: f.tool_version };
        m.validate().map_err(|e| e.to_string())?;
        Ok(m)
    }
}

/// A file that matched the extension filter but could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnreadableImage {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub manifest: DatasetManifest,
    pub unreadable: Vec<UnreadableImage>,
}

impl DatasetManifest {
    pub fn class(&self, name: &str) -> Option<&ClassImages> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn total_images(&self) -> usize {
        self.classes.iter().map(ClassImages::len).sum()
    }

    pub fn absolute_path(&self, entry: &ImageEntry) -> PathBuf {
        Path::new(&self.root).join(&entry.relative_path)
    }

    pub fn load_image(&self, entry: &ImageEntry) -> Result<DynamicImage> {
        decode(&self.absolute_path(entry))
    }

    /// Digest of the manifest content, ignoring `created_at` and `tool_version`.
    pub fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.classes {
            h.update(c.digest().as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.classes {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateClass(c.name.clone()));
            }
        }
        let sorted = self.classes.windows(2).all(|w| w[0].name < w[1].name);
        if !sorted {
            return Err(Error::InvalidConfig("manifest classes are not in ascending order".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        crate::write_file(path, text.as_bytes())
    }
}

/// SHA-256 over `width`, `height`, `channels` (little-endian u32 each) followed by the raw 8-bit samples.
pub fn pixel_digest(width: u32, height: u32, channels: u32, samples: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(width.to_le_bytes());
    h.update(height.to_le_bytes());
    h.update(channels.to_le_bytes());
    h.update(samples);
    hex::encode(h.finalize())
}

/// Source-image digest over the RGBA8 expansion of the decoded image.
pub fn image_digest(img: &DynamicImage) -> String {
    let rgba = img.to_rgba8();
    pixel_digest(rgba.width(), rgba.height(), 4, rgba.as_raw())
}

pub(crate) fn decode(path: &Path) -> Result<DynamicImage> {
    let fail = |reason: String| Error::DecodeFailure { path: path.to_path_buf(), reason };
    image::ImageReader::open(path)
        .map_err(|e| fail(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| fail(e.to_string()))?
        .decode()
        .map_err(|e| fail(e.to_string()))
}

fn has_extension(path: &Path, extensions: &BTreeSet<String>) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| extensions.contains(&e.to_ascii_lowercase()))
}

fn relative_string(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Scan `root` into a manifest. Undecodable files are excluded and reported.
pub fn scan_dataset(root: &Path, extensions: &[&str]) -> Result<ScanOutcome> {
    if !root.is_dir() {
        return Err(Error::NotADirectory(root.to_path_buf()));
    }
    let extensions: BTreeSet<String> = extensions.iter().map(|e| e.trim_start_matches('.').to_ascii_lowercase()).collect();

    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    for item in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let item = item.map_err(|e| Error::io(root, e))?;
        let path = item.path();
        let name = item.file_name().to_string_lossy().into_owned();
        if path.is_dir() && !name.starts_with('.') {
            class_dirs.push((name, path));
        }
    }
    class_dirs.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));

    // Gather (class, relative path, absolute path) and sort before decoding.
    let mut files: Vec<(usize, String, PathBuf)> = Vec::new();
    for (ci, (_, dir)) in class_dirs.iter().enumerate() {
        for item in WalkDir::new(dir).follow_links(true) {
            let item = item.map_err(|e| {
                let path = e.path().unwrap_or(dir).to_path_buf();
                Error::io(path, e.into())
            })?;
            if item.file_type().is_file() && has_extension(item.path(), &extensions) {
                files.push((ci, relative_string(root, item.path()), item.into_path()));
            }
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.as_bytes().cmp(b.1.as_bytes())));

    let decoded: Vec<std::result::Result<(u32, u32, String), String>> = files
        .par_iter()
        .map(|(_, _, abs)| {
            decode(abs).map(|img| (img.width(), img.height(), image_digest(&img))).map_err(|e| match e {
                Error::DecodeFailure { reason, .. } => reason,
                other => other.to_string(),
            })
        })
        .collect();

    let mut classes: Vec<ClassImages> =
        class_dirs.iter().map(|(name, _)| ClassImages { name: name.clone(), entries: Vec::new() }).collect();
    let mut unreadable = Vec::new();
    for ((ci, rel, _), result) in files.into_iter().zip(decoded) {
        match result {
            Ok((width, height, digest)) => {
                let class = &mut classes[ci];
                let index = class.entries.len();
                class.entries.push(ImageEntry {
                    class_name: class.name.clone(),
                    index,
                    relative_path: rel,
                    width,
                    height,
                    content_digest: digest,
                });
            }
            Err(reason) => {
                warn!("unreadable image {rel}: {reason}");
                unreadable.push(UnreadableImage { path: rel, reason });
            }
        }
    }

    classes.retain(|c| {
        if c.is_empty() {
            warn!("class directory {:?} holds no decodable images; skipped", c.name);
        }
        !c.is_empty()
    });
    if classes.is_empty() {
        return Err(Error::EmptyDataset { root: root.to_path_buf() });
    }

    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = DatasetManifest {
        root: root.to_string_lossy().into_owned(),
        classes,
        created_at,
        tool_version: crate::TOOL_VERSION.to_string(),
    };
    manifest.validate()?;
    Ok(ScanOutcome { manifest, unreadable })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStat<S> {
    pub class_name: String,
    pub count: usize,
    pub fraction: S,
}

/// Per-class image counts and their share of the total.
pub fn class_stats<S: Scalar>(manifest: &DatasetManifest) -> Vec<ClassStat<S>> {
    let total = manifest.total_images();
    manifest
        .classes
        .iter()
        .map(|c| ClassStat {
            class_name: c.name.clone(),
            count: c.len(),
            fraction: S::from_usize(c.len()).unwrap() / S::from_usize(total.max(1)).unwrap(),
        })
        .collect()
}
