//! Image loading and normalization into model-ready tensors.
//!
//! Loading is the only preprocessing the pipeline performs: decode,
//! replicate grayscale to 3 channels, bilinear-resize to the backbone's
//! input resolution, and apply the normalization its weights expect.

use std::path::Path;

use candle_core::{Device, Tensor};
use image::imageops::FilterType;

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};

/// ImageNet channel statistics used by the pretrained DenseNet weights.
const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Plain [0, 1] scaling.
    ZeroOne,
    /// (x - mean_c) / std_c with the ImageNet statistics.
    ImageNet,
    /// 2x - 1, mapping [0, 1] onto [-1, 1].
    SymmetricUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessSpec {
    pub resolution: usize,
    pub normalization: Normalization,
}

/// Decode one image into a normalized [3, R, R] tensor.
pub fn load_image_tensor(path: &Path, spec: &PreprocessSpec, device: &Device) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let r = spec.resolution as u32;
    let rgb = img.resize_exact(r, r, FilterType::Triangle).to_rgb8();

    let hw = (r * r) as usize;
    let mut data = vec![0.0f32; 3 * hw];
    for (i, pixel) in rgb.pixels().enumerate() {
        for c in 0..3 {
            let x = pixel.0[c] as f32 / 255.0;
            data[c * hw + i] = match spec.normalization {
                Normalization::ZeroOne => x,
                Normalization::ImageNet => (x - IMAGENET_MEAN[c]) / IMAGENET_STD[c],
                Normalization::SymmetricUnit => 2.0 * x - 1.0,
            };
        }
    }
    Ok(Tensor::from_vec(
        data,
        &[3, spec.resolution, spec.resolution],
        device,
    )?)
}

/// A manifest decoded into one device tensor, ready for batching.
pub struct LoadedDataset {
    ids: Vec<String>,
    labels: Vec<u8>,
    images: Tensor,
}

impl LoadedDataset {
    pub fn from_manifest(
        manifest: &DatasetManifest,
        spec: &PreprocessSpec,
        device: &Device,
    ) -> Result<Self> {
        let samples = manifest.samples();
        if samples.is_empty() {
            return Err(Error::EmptyDataset(
                "manifest has no records to load".into(),
            ));
        }
        let mut ids = Vec::with_capacity(samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        let mut tensors = Vec::with_capacity(samples.len());
        for s in &samples {
            tensors.push(load_image_tensor(&s.source_path, spec, device)?);
            ids.push(s.image_id.clone());
            labels.push(s.label);
        }
        let images = Tensor::stack(&tensors, 0)?;
        Ok(LoadedDataset {
            ids,
            labels,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Select a batch by sample indices: (images, labels).
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<u8>)> {
        let idx: Vec<u32> = indices.iter().map(|&i| i as u32).collect();
        let idx = Tensor::from_vec(idx, &[indices.len()], self.images.device())?;
        let images = self.images.index_select(&idx, 0)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((images, labels))
    }
}
