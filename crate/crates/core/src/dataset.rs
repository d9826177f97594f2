//! Paired dataset synthesis and the `manifest.json` that indexes it.
//!
//! Layout produced by [`synthesize_dataset`]:
//!
//! ```text
//! <out>/manifest.json
//! <out>/original/<image_id>.png
//! <out>/<filter name>/<image_id>.png      one directory per filter
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{self, apply_filter_salted, mix_seed, FILTER_NAMES, ORIGINAL};
use crate::image::RgbImage;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Number of classifier classes: sixteen filters plus `original`.
pub const NUM_CLASSES: usize = 17;

/// Class vocabulary: the filters in canonical order, then `original`.
pub fn class_names() -> [&'static str; NUM_CLASSES] {
    let mut out = [ORIGINAL; NUM_CLASSES];
    out[..16].copy_from_slice(&FILTER_NAMES);
    out
}

pub fn class_index(name: &str) -> Option<usize> {
    class_names().iter().position(|n| *n == name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub filter_name: String,
    pub relative_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    /// `[height, width]`
    pub image_size: [usize; 2],
    #[serde(default)]
    pub registry_version: u32,
    /// Filters present for every image (excluding `original`).
    #[serde(default)]
    pub filters: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub skipped: Vec<SkippedFile>,
}

impl DatasetManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Checks that every image has exactly one entry per filter plus one original.
    pub fn validate(&self) -> Result<()> {
        let mut expected: Vec<&str> = self.filters.iter().map(String::as_str).collect();
        expected.push(ORIGINAL);
        expected.sort_unstable();
        let mut per_image: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.entries {
            if class_index(&e.filter_name).is_none() {
                return Err(Error::Dataset(format!("unknown filter `{}`", e.filter_name)));
            }
            per_image
                .entry(&e.image_id)
                .or_default()
                .push(&e.filter_name);
        }
        for (id, mut names) in per_image {
            names.sort_unstable();
            if names != expected {
                return Err(Error::Dataset(format!(
                    "image `{id}` has entries {names:?}, expected {expected:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn image_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .map(|e| e.image_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    pub fn entry(&self, image_id: &str, filter_name: &str) -> Option<&ManifestEntry> {
        self.entries
            .iter()
            .find(|e| e.image_id == image_id && e.filter_name == filter_name)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    /// `(height, width)`
    pub size: (usize, usize),
    pub seed: u64,
    /// Filters to emit besides `original`; all sixteen by default.
    pub filters: Vec<String>,
}

impl SynthOptions {
    pub fn new(size: (usize, usize), seed: u64) -> Self {
        SynthOptions {
            size,
            seed,
            filters: FILTER_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Resizes every decodable image in `src_dir` and writes it with all
/// filters applied. Outputs are a pure function of inputs and seed.
pub fn synthesize_dataset(
    src_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    size: (usize, usize),
    seed: u64,
) -> Result<DatasetManifest> {
    synthesize_dataset_with(src_dir, out_dir, &SynthOptions::new(size, seed))
}

pub fn synthesize_dataset_with(
    src_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    opts: &SynthOptions,
) -> Result<DatasetManifest> {
    let (src_dir, out_dir) = (src_dir.as_ref(), out_dir.as_ref());
    let specs = opts
        .filters
        .iter()
        .map(|name| filters::builtin_filter(name))
        .collect::<Result<Vec<_>>>()?;
    if specs.iter().any(|s| s.name == ORIGINAL) {
        return Err(Error::Config("`original` is always emitted; do not list it".into()));
    }

    let files = list_files(src_dir)?;
    let mut skipped = Vec::new();
    let mut sources = Vec::new();
    let mut used_ids = HashSet::new();
    for path in files {
        match RgbImage::load(&path) {
            Ok(img) => {
                let id = unique_id(&path, &mut used_ids);
                sources.push((id, img));
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(SkippedFile {
                    path: path
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if sources.is_empty() {
        return Err(Error::Dataset(format!(
            "no decodable images in {}",
            src_dir.display()
        )));
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (h, w) = opts.size;
    let per_image: Vec<Vec<ManifestEntry>> = sources
        .par_iter()
        .map(|(id, img)| {
            let base = img.resize(w, h)?;
            let salt = mix_seed(opts.seed, fnv1a(id.as_bytes()));
            let mut entries = Vec::with_capacity(specs.len() + 1);
            let mut write = |name: &str, out: &RgbImage| -> Result<()> {
                let rel = format!("{name}/{id}.png");
                out.save_png(out_dir.join(&rel))?;
                entries.push(ManifestEntry {
                    image_id: id.clone(),
                    filter_name: name.to_string(),
                    relative_path: rel,
                });
                Ok(())
            };
            write(ORIGINAL, &base)?;
            for spec in &specs {
                write(&spec.name, &apply_filter_salted(&base, spec, salt)?)?;
            }
            Ok(entries)
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest {
        seed: opts.seed,
        image_size: [h, w],
        registry_version: filters::registry().version,
        filters: opts.filters.clone(),
        entries: per_image.into_iter().flatten().collect(),
        skipped,
    };
    manifest.validate()?;
    manifest.save(out_dir)?;
    Ok(manifest)
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && !p
                    .file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with('.'))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn unique_id(path: &Path, used: &mut HashSet<String>) -> String {
    let stem: String = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let stem = if stem.is_empty() { "image".to_string() } else { stem };
    let mut id = stem.clone();
    let mut n = 2;
    while !used.insert(id.clone()) {
        id = format!("{stem}_{n}");
        n += 1;
    }
    id
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_vocabulary_has_original_last() {
        let names = class_names();
        assert_eq!(names.len(), 17);
        assert_eq!(names[16], ORIGINAL);
        assert_eq!(class_index("Willow"), Some(14));
        assert_eq!(class_index("Gotham"), None);
    }

    #[test]
    fn ids_are_sanitized_and_unique() {
        let mut used = HashSet::new();
        assert_eq!(unique_id(Path::new("a b.png"), &mut used), "a_b");
        assert_eq!(unique_id(Path::new("a b.jpg"), &mut used), "a_b_2");
    }

    #[test]
    fn validate_catches_missing_original() {
        let m = DatasetManifest {
            seed: 0,
            image_size: [8, 8],
            registry_version: 1,
            filters: vec!["Lo-Fi".into()],
            entries: vec![ManifestEntry {
                image_id: "x".into(),
                filter_name: "Lo-Fi".into(),
                relative_path: "Lo-Fi/x.png".into(),
            }],
            skipped: vec![],
        };
        assert!(m.validate().is_err());
    }
}
