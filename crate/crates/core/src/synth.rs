//! Synthetic toy corpus for CPU-scale end-to-end runs.
//!
//! Images are built so both tasks in the pipeline are learnable by a small
//! network fed through global average pooling. Pooling discards the mean
//! under mirroring, so each task is encoded as the direction of a sawtooth
//! wave: pixels rise slowly then drop sharply, an asymmetry that survives
//! conv+ReLU+pool. A horizontal sawtooth carries orientation (the flip
//! pretext task reverses it) and a vertical sawtooth, rising downward for
//! one class and upward for the other, carries the downstream label.

use std::path::Path;

use image::{GrayImage, Luma};
use rand::Rng;

use crate::dataset::{ClassLabel, Split};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyCorpusSpec {
    pub per_class_train: usize,
    pub per_class_test: usize,
    /// Square image side in pixels.
    pub size: u32,
    pub seed: u64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        ToyCorpusSpec {
            per_class_train: 12,
            per_class_test: 6,
            size: 64,
            seed: 7,
        }
    }
}

const BASE_LEVEL: i32 = 110;
const ORIENTATION_AMPLITUDE: i32 = 75;
const CLASS_AMPLITUDE: i32 = 30;
const WAVE_PERIOD: u32 = 3;
const NOISE_AMPLITUDE: i32 = 6;

/// Sawtooth rising from -amp to +amp over one period, then dropping.
fn sawtooth(t: u32, amp: i32) -> i32 {
    let phase = (t % WAVE_PERIOD) as i32;
    -amp + 2 * amp * phase / (WAVE_PERIOD as i32 - 1)
}

/// Render one toy image. Deterministic in (spec.seed, split, class, index).
fn toy_image(spec: &ToyCorpusSpec, split: Split, class: ClassLabel, index: usize) -> GrayImage {
    let salt = [
        match split {
            Split::Train => 1u64,
            Split::Test => 2,
        },
        match class {
            ClassLabel::Covid => 1u64,
            ClassLabel::NonCovid => 2,
        },
        index as u64,
    ]
    .iter()
    .fold(spec.seed, |acc, &s| derive_seed(acc, s));
    let mut rng = seeded_rng(salt);

    let class_sign: i32 = match class {
        ClassLabel::Covid => 1,
        ClassLabel::NonCovid => -1,
    };
    let w = spec.size;
    let mut img = GrayImage::new(w, w);
    for y in 0..w {
        for x in 0..w {
            let v = BASE_LEVEL
                + sawtooth(x, ORIENTATION_AMPLITUDE)
                + class_sign * sawtooth(y, CLASS_AMPLITUDE)
                + rng.random_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE);
            img.put_pixel(x, y, Luma([v.clamp(0, 255) as u8]));
        }
    }
    img
}

/// Write a toy corpus in the standard ingestion layout:
/// `<root>/{train,test}/{covid,non_covid}/toy_<split>_<class>_<idx>.png`.
/// Returns the total number of images written.
pub fn generate_toy_corpus(root: &Path, spec: &ToyCorpusSpec) -> Result<usize> {
    if spec.per_class_train == 0 || spec.size < 8 {
        return Err(Error::InvalidInput(
            "toy corpus needs per_class_train >= 1 and size >= 8".into(),
        ));
    }
    let mut written = 0;
    for (split, count) in [
        (Split::Train, spec.per_class_train),
        (Split::Test, spec.per_class_test),
    ] {
        for class in [ClassLabel::Covid, ClassLabel::NonCovid] {
            let dir = root.join(split.as_str()).join(class.as_str());
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for i in 0..count {
                let name = format!("toy_{}_{}_{i:03}.png", split.as_str(), class.as_str());
                let path = dir.join(name);
                toy_image(spec, split, class, i)
                    .save(&path)
                    .map_err(|e| Error::Image {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                written += 1;
            }
        }
    }
    Ok(written)
}
