//! Declarative experiment-matrix configuration (TOML).
//!
//! ```toml
//! data_root = "data/prepared"      # dir with downstream.manifest, pretext/
//! output_dir = "runs/full"         # per-experiment artifacts land here
//! weights_dir = "weights"          # optional; <backbone>.safetensors files
//!
//! [[experiment]]
//! id = "exp01"                     # optional; defaults to backbone_fX.XX_sN
//! backbone = "densenet169"         # densenet169 | inceptionv3 | tiny_test
//! weights_init = "imagenet_pretrained"  # optional; tiny_test defaults to random
//! fraction = 0.5                   # of the pretext set; 0.0 skips the phase
//! seed = 42
//! head_width = 1024                # optional
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{BackboneName, BackboneSpec, HeadSpec, WeightsInit};
use crate::pipeline::ExperimentConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    data_root: String,
    output_dir: String,
    weights_dir: Option<String>,
    #[serde(default)]
    experiment: Vec<ExperimentEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentEntry {
    id: Option<String>,
    backbone: String,
    weights_init: Option<String>,
    fraction: f64,
    seed: u64,
    head_width: Option<usize>,
}

/// A parsed matrix config: resolved paths plus one ExperimentConfig per
/// entry, in file order.
#[derive(Debug, Clone)]
pub struct MatrixConfig {
    pub data_root: PathBuf,
    pub output_dir: PathBuf,
    pub weights_dir: Option<PathBuf>,
    pub experiments: Vec<ExperimentConfig>,
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

pub fn load_matrix_config(path: &Path) -> Result<MatrixConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: MatrixFile =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if file.experiment.is_empty() {
        return Err(Error::Config(format!(
            "{}: no [[experiment]] entries",
            path.display()
        )));
    }

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let data_root = resolve(base, &file.data_root);
    let output_dir = resolve(base, &file.output_dir);
    let weights_dir = file.weights_dir.as_deref().map(|w| resolve(base, w));

    let mut experiments = Vec::with_capacity(file.experiment.len());
    for entry in &file.experiment {
        let name: BackboneName = entry.backbone.parse()?;
        // Real backbones default to ImageNet initialization; tiny_test has
        // no published weights and defaults to random.
        let weights_init = match &entry.weights_init {
            Some(w) => w.parse()?,
            None if name == BackboneName::TinyTest => WeightsInit::Random,
            None => WeightsInit::ImagenetPretrained,
        };
        let backbone = BackboneSpec::new(name, weights_init)?;
        let head = entry
            .head_width
            .map_or_else(HeadSpec::default, |w| HeadSpec { hidden_width: w });
        let experiment_id = entry
            .id
            .clone()
            .unwrap_or_else(|| format!("{}_f{:.2}_s{}", name.as_str(), entry.fraction, entry.seed));
        let config = ExperimentConfig {
            experiment_id,
            backbone,
            head,
            ss_fraction: entry.fraction,
            seed: entry.seed,
            data_root: data_root.clone(),
            output_dir: output_dir.clone(),
            weights_dir: weights_dir.clone(),
        };
        config.validate()?;
        experiments.push(config);
    }
    Ok(MatrixConfig {
        data_root,
        output_dir,
        weights_dir,
        experiments,
    })
}
