use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{load_image, Image};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split {other:?}"))),
        }
    }
}

/// A split described by a `path,label` CSV manifest. Relative paths are
/// resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<(PathBuf, usize)>,
    pub class_count: usize,
    pub split: Split,
}

#[derive(Debug, serde::Deserialize)]
struct ManifestRow {
    path: String,
    label: usize,
}

impl LabeledDataset {
    pub fn from_manifest(path: &Path, class_count: usize, split: Split) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Ingestion { path: path.to_path_buf(), reason: e.to_string() })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse_manifest(&text, base, class_count, split)
    }

    pub fn parse_manifest(text: &str, base_dir: &Path, class_count: usize, split: Split) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::Argument("class_count must be positive".into()));
        }
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Config(format!("manifest header: {e}")))?;
        if headers.iter().collect::<Vec<_>>() != ["path", "label"] {
            return Err(Error::Config(format!("manifest header must be `path,label`, got {headers:?}")));
        }
        let mut items = Vec::new();
        for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
            let row = row.map_err(|e| Error::Config(format!("manifest row {}: {e}", i + 1)))?;
            if row.label >= class_count {
                return Err(Error::Config(format!(
                    "manifest row {}: label {} outside [0, {class_count})",
                    i + 1,
                    row.label
                )));
            }
            let p = PathBuf::from(&row.path);
            items.push((if p.is_absolute() { p } else { base_dir.join(p) }, row.label));
        }
        Ok(Self { items, class_count, split })
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
        w.write_record(["path", "label"]).map_err(|e| Error::Io(e.into()))?;
        for (p, label) in &self.items {
            let rel = p.strip_prefix(base).unwrap_or(p);
            w.write_record([rel.to_string_lossy().as_ref(), &label.to_string()])
                .map_err(|e| Error::Io(e.into()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn load(&self, height: usize, width: usize) -> Result<LoadedSplit> {
        let images = self.items.iter().map(|(p, _)| load_image(p, height, width)).collect::<Result<Vec<_>>>()?;
        Ok(LoadedSplit {
            images,
            labels: self.items.iter().map(|(_, l)| *l).collect(),
            class_count: self.class_count,
        })
    }
}

/// Decoded images with their labels, ready for training or evaluation.
#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LoadedSplit {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Relabels through `groups[label]`, e.g. to derive a coarse task.
    pub fn remap_labels(&self, groups: &[usize]) -> Result<LoadedSplit> {
        if groups.len() != self.class_count {
            return Err(Error::Argument(format!(
                "label map has {} entries for {} classes",
                groups.len(),
                self.class_count
            )));
        }
        let class_count = groups.iter().max().map_or(0, |m| m + 1);
        Ok(LoadedSplit {
            images: self.images.clone(),
            labels: self.labels.iter().map(|&l| groups[l]).collect(),
            class_count,
        })
    }

    pub fn take(&self, n: usize) -> LoadedSplit {
        LoadedSplit {
            images: self.images.iter().take(n).cloned().collect(),
            labels: self.labels.iter().take(n).copied().collect(),
            class_count: self.class_count,
        }
    }
}
