//! Flip-detection pretext dataset: materialization and fraction subsets.
//!
//! Every downstream image is re-encoded into `<out>/original/` and its
//! horizontal mirror into `<out>/flipped/` under the same filename, which
//! doubles the data available for self-supervised pretraining. Partial
//! datasets are sequential prefixes per folder, so smaller fractions are
//! always subsets of larger ones.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::DynamicImage;

use crate::dataset::{check_fraction, DatasetManifest, Orientation, PretextRecord, Split};
use crate::error::{Error, Result};

/// The fraction grid of the experiment matrix. Other values in (0, 1] work
/// but are logged as unusual.
pub const STANDARD_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// JPEG quality for materialized pretext images.
const JPEG_QUALITY: u8 = 95;

/// Mirror an image left-to-right: output pixel (x, y) = input (W-1-x, y).
pub fn horizontal_flip(image: &DynamicImage) -> DynamicImage {
    image.fliph()
}

/// Materialize the pretext dataset for a downstream manifest.
///
/// Output filenames are the source file stems re-extensioned to `.jpg`;
/// a stem collision between two source images is an error because the flat
/// original/flipped folders could not hold both. Records are ordered as the
/// folders list: all originals by filename, then all flips by filename, and
/// order_index is the filename's rank within its folder, so an original and
/// its flip share an index. Splits carry over from the source records.
pub fn build_pretext_dataset(
    source: &DatasetManifest,
    output_dir: &Path,
) -> Result<DatasetManifest> {
    let source_records = source.downstream_records()?;
    if source_records.is_empty() {
        return Err(Error::EmptyDataset("no source records to flip".into()));
    }

    // Output name -> source record, detecting stem collisions up front.
    let mut by_name: BTreeMap<String, &crate::dataset::ImageRecord> = BTreeMap::new();
    for record in source_records {
        let stem = Path::new(&record.image_id)
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| {
                Error::InvalidInput(format!("image_id {:?} has no usable stem", record.image_id))
            })?;
        let name = format!("{stem}.jpg");
        if let Some(previous) = by_name.insert(name.clone(), record) {
            return Err(Error::InvalidInput(format!(
                "images {:?} and {:?} would both be written as {name:?}; rename one",
                previous.image_id, record.image_id
            )));
        }
    }

    let original_dir = output_dir.join(Orientation::Original.as_str());
    let flipped_dir = output_dir.join(Orientation::Flipped.as_str());
    for dir in [&original_dir, &flipped_dir] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut originals = Vec::with_capacity(by_name.len());
    let mut flips = Vec::with_capacity(by_name.len());
    // BTreeMap iteration is filename-lexicographic, which defines order_index.
    for (order_index, (name, record)) in by_name.iter().enumerate() {
        let img = image::open(&record.source_path).map_err(|e| Error::Image {
            path: record.source_path.clone(),
            message: e.to_string(),
        })?;
        let flipped = horizontal_flip(&img);
        for (dir, orientation, img) in [
            (&original_dir, Orientation::Original, &img),
            (&flipped_dir, Orientation::Flipped, &flipped),
        ] {
            let out_path = dir.join(name);
            let file = File::create(&out_path).map_err(|e| Error::io(&out_path, e))?;
            let encoder = JpegEncoder::new_with_quality(BufWriter::new(file), JPEG_QUALITY);
            img.to_rgb8()
                .write_with_encoder(encoder)
                .map_err(|e| Error::Image {
                    path: out_path.clone(),
                    message: e.to_string(),
                })?;
            let pretext_record = PretextRecord {
                image_id: format!("{}/{name}", orientation.as_str()),
                source_path: out_path,
                orientation_label: orientation,
                split: record.split,
                order_index,
            };
            match orientation {
                Orientation::Original => originals.push(pretext_record),
                Orientation::Flipped => flips.push(pretext_record),
            }
        }
    }

    originals.extend(flips);
    DatasetManifest::new_pretext(originals, 1.0)
}

/// Sequential fraction subset: the first floor(f * N) records of each
/// (split, orientation) group in order_index order, which keeps orientation
/// parity exact and train/test separation intact. Records keep their input
/// order; the fraction field is set to `f`.
pub fn take_fraction(pretext: &DatasetManifest, f: f64) -> Result<DatasetManifest> {
    check_fraction(f)?;
    let records = pretext.pretext_records()?;
    if !STANDARD_FRACTIONS.contains(&f) {
        log::warn!("fraction {f} is outside the standard grid {STANDARD_FRACTIONS:?}");
    }
    if f == 1.0 {
        let mut full = pretext.clone();
        full.fraction = 1.0;
        return Ok(full);
    }

    // order_index values per (split, orientation) group, ascending.
    let mut groups: BTreeMap<(Split, Orientation), Vec<usize>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.split, r.orientation_label))
            .or_default()
            .push(r.order_index);
    }
    let mut keep: BTreeMap<(Split, Orientation), std::collections::BTreeSet<usize>> =
        BTreeMap::new();
    for (key, mut indices) in groups {
        indices.sort_unstable();
        let take = (f * indices.len() as f64).floor() as usize;
        keep.insert(key, indices.into_iter().take(take).collect());
    }

    let subset = records
        .iter()
        .filter(|r| keep[&(r.split, r.orientation_label)].contains(&r.order_index))
        .cloned()
        .collect();
    DatasetManifest::new_pretext(subset, f)
}
