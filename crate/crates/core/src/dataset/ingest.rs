//! Corpus ingestion: turn a labeled image directory tree into a manifest.
//!
//! Expected layout: `<root>/<split>/<class>/<image files>`, with splits
//! `train` and `test` (plus an optional `val`, which callers merge into
//! train via [`merge_validation`]) and classes `covid` and `non_covid`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::dataset::{ClassLabel, DatasetManifest, ImageRecord, Split};
use crate::error::{Error, Result};

/// One file the caller wants ingested, with its split and label already
/// assigned (from the directory structure or an external listing).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListingEntry {
    pub source_path: PathBuf,
    pub class_label: ClassLabel,
    pub split: Split,
}

/// Mapping of split to labeled files, ready for ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitListing {
    pub entries: Vec<ListingEntry>,
}

impl SplitListing {
    /// Scan `<root>/{train,test}/{covid,non_covid}` for images.
    pub fn scan(root: &Path) -> Result<SplitListing> {
        if !root.is_dir() {
            return Err(Error::MissingFile {
                path: root.to_path_buf(),
            });
        }
        let mut listing = SplitListing::default();
        for split in [Split::Train, Split::Test] {
            let dir = root.join(split.as_str());
            if !dir.is_dir() {
                return Err(Error::MissingFile { path: dir });
            }
            listing
                .entries
                .extend(Self::scan_split_dir(&dir, split)?.entries);
        }
        Ok(listing)
    }

    /// Scan one `<dir>/{covid,non_covid}` split directory, assigning every
    /// file the given split. Used for the optional validation directory.
    pub fn scan_split_dir(dir: &Path, split: Split) -> Result<SplitListing> {
        let mut entries = Vec::new();
        for class in [ClassLabel::Covid, ClassLabel::NonCovid] {
            let class_dir = dir.join(class.as_str());
            if !class_dir.is_dir() {
                return Err(Error::MissingFile { path: class_dir });
            }
            let mut files = Vec::new();
            let iter = std::fs::read_dir(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
            for entry in iter {
                let entry = entry.map_err(|e| Error::io(&class_dir, e))?;
                let path = entry.path();
                if path.is_file() {
                    files.push(path);
                }
            }
            // Directory iteration order is filesystem-dependent; sorting by
            // filename is what makes ingestion deterministic.
            files.sort_by_key(|p| p.file_name().map(|n| n.to_owned()));
            entries.extend(files.into_iter().map(|source_path| ListingEntry {
                source_path,
                class_label: class,
                split,
            }));
        }
        Ok(SplitListing { entries })
    }
}

/// Ingest a listing into a downstream manifest.
///
/// Record order is (train before test, covid before non_covid, filename
/// lexicographic), a pure function of the listing, so re-ingestion of an
/// unchanged corpus reproduces the digest. Every file is opened and decoded
/// once; unreadable images fail ingestion rather than a training run later.
pub fn ingest_corpus(root: &Path, listing: &SplitListing) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::MissingFile {
            path: root.to_path_buf(),
        });
    }
    if listing.entries.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no records under {}",
            root.display()
        )));
    }
    let mut entries = listing.entries.clone();
    entries.sort_by(|a, b| {
        (a.split, a.class_label, a.source_path.file_name()).cmp(&(
            b.split,
            b.class_label,
            b.source_path.file_name(),
        ))
    });

    let mut records = Vec::with_capacity(entries.len());
    for entry in &entries {
        let path = &entry.source_path;
        if !path.is_file() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            });
        }
        image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let image_id = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::InvalidInput(format!("non-UTF-8 filename: {}", path.display())))?
            .to_string();
        records.push(ImageRecord {
            image_id,
            source_path: path.clone(),
            class_label: entry.class_label,
            split: entry.split,
            patient_id: None,
        });
    }
    DatasetManifest::new_downstream(records)
}

/// Convenience wrapper: scan the standard layout under `root` and ingest it.
pub fn ingest_layout(root: &Path) -> Result<DatasetManifest> {
    ingest_corpus(root, &SplitListing::scan(root)?)
}

/// Fold a validation manifest into a training manifest: all records of
/// both, train records first, everything split=train.
///
/// Both inputs must be downstream manifests containing only train-split
/// records; a test-split record in either is rejected rather than silently
/// re-marked, since that would move test imagery into training.
pub fn merge_validation(train: &DatasetManifest, val: &DatasetManifest) -> Result<DatasetManifest> {
    let train_records = train.downstream_records()?;
    let val_records = val.downstream_records()?;

    for (name, records) in [("train", train_records), ("validation", val_records)] {
        if let Some(r) = records.iter().find(|r| r.split != Split::Train) {
            return Err(Error::Leakage(format!(
                "{name} manifest contains test-split record {:?}; refusing to merge it into training data",
                r.image_id
            )));
        }
    }

    let train_ids: BTreeSet<&str> = train_records.iter().map(|r| r.image_id.as_str()).collect();
    if let Some(dup) = val_records
        .iter()
        .find(|r| train_ids.contains(r.image_id.as_str()))
    {
        return Err(Error::Leakage(format!(
            "image_id {:?} appears in both train and validation manifests",
            dup.image_id
        )));
    }

    let merged = train_records
        .iter()
        .chain(val_records.iter())
        .cloned()
        .collect();
    DatasetManifest::new_downstream(merged)
}
