//! Self-describing checkpoint files.
//!
//! Checkpoints are safetensors files holding every parameter (including
//! batch-norm running statistics) as f32, plus a metadata header recording
//! the format version, architecture, head spec, seed, and trainable scope.
//! Round-trips are bitwise lossless.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::error::{Error, Result};
use crate::model::params::ParamStore;
use crate::model::{BackboneSpec, HeadSpec, ModelHandle, TrainableScope};

pub const FORMAT_VERSION: &str = "1";

/// Save every parameter of the model with a descriptive header.
pub fn save_checkpoint(model: &ModelHandle, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }

    let mut buffers: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, var) in model.store().iter() {
        let data: Vec<f32> = var.as_tensor().flatten_all()?.to_vec1()?;
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        buffers.push((name.to_string(), var.dims().to_vec(), bytes));
    }
    let views: Vec<(&str, TensorView)> = buffers
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (name.as_str(), v))
                .map_err(|e| Error::Model(format!("checkpoint tensor {name:?}: {e}")))
        })
        .collect::<Result<_>>()?;

    let metadata = HashMap::from([
        ("format_version".to_string(), FORMAT_VERSION.to_string()),
        ("backbone".to_string(), model.backbone().name.to_string()),
        (
            "weights_init".to_string(),
            model.backbone().weights_init.to_string(),
        ),
        (
            "head_hidden".to_string(),
            model.head().hidden_width.to_string(),
        ),
        ("head_activation".to_string(), "relu".to_string()),
        ("seed".to_string(), model.seed().to_string()),
        (
            "trainable_scope".to_string(),
            model.trainable_scope().to_string(),
        ),
    ]);

    let bytes = safetensors::serialize(views, Some(metadata))
        .map_err(|e| Error::Model(format!("checkpoint serialization failed: {e}")))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn view_to_tensor(name: &str, view: &TensorView<'_>, device: &Device) -> Result<Tensor> {
    if view.dtype() != Dtype::F32 {
        return Err(Error::CheckpointMismatch(format!(
            "tensor {name:?} has dtype {:?}, expected F32",
            view.dtype()
        )));
    }
    let raw = view.data();
    let mut data = Vec::with_capacity(raw.len() / 4);
    for chunk in raw.chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().expect("chunk of 4")));
    }
    Ok(Tensor::from_vec(data, view.shape(), device)?)
}

/// Read a plain safetensors file into named tensors (also used for the
/// exported pretrained backbone weights).
pub(crate) fn read_tensor_file(path: &Path, device: &Device) -> Result<BTreeMap<String, Tensor>> {
    let bytes = read_file(path)?;
    let st = SafeTensors::deserialize(&bytes)
        .map_err(|e| Error::CheckpointMismatch(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (name, view) in st.tensors() {
        let tensor = view_to_tensor(&name, &view, device)?;
        out.insert(name, tensor);
    }
    Ok(out)
}

fn read_metadata(path: &Path, bytes: &[u8]) -> Result<HashMap<String, String>> {
    let (_, meta) = SafeTensors::read_metadata(bytes)
        .map_err(|e| Error::CheckpointMismatch(format!("{}: {e}", path.display())))?;
    meta.metadata().clone().ok_or_else(|| {
        Error::CheckpointMismatch(format!(
            "{} has no checkpoint header metadata",
            path.display()
        ))
    })
}

fn meta_field<'m>(meta: &'m HashMap<String, String>, key: &str, path: &Path) -> Result<&'m str> {
    meta.get(key).map(String::as_str).ok_or_else(|| {
        Error::CheckpointMismatch(format!(
            "{} is missing checkpoint field {key:?}",
            path.display()
        ))
    })
}

/// Reconstruct a model entirely from a checkpoint file.
pub fn load_checkpoint(path: &Path, device: &Device) -> Result<ModelHandle> {
    let bytes = read_file(path)?;
    let meta = read_metadata(path, &bytes)?;
    let version = meta_field(&meta, "format_version", path)?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "unsupported checkpoint format version {version:?}"
        )));
    }
    let backbone = BackboneSpec::new(
        meta_field(&meta, "backbone", path)?.parse()?,
        meta_field(&meta, "weights_init", path)?.parse()?,
    )?;
    let head = HeadSpec {
        hidden_width: meta_field(&meta, "head_hidden", path)?
            .parse()
            .map_err(|_| Error::CheckpointMismatch("bad head_hidden field".into()))?,
    };
    let seed: u64 = meta_field(&meta, "seed", path)?
        .parse()
        .map_err(|_| Error::CheckpointMismatch("bad seed field".into()))?;
    let scope: TrainableScope = meta_field(&meta, "trainable_scope", path)?.parse()?;

    let st = SafeTensors::deserialize(&bytes)
        .map_err(|e| Error::CheckpointMismatch(format!("{}: {e}", path.display())))?;
    let expected = expected_names(&backbone, &head);
    let found: BTreeSet<String> = st.names().iter().map(|s| s.to_string()).collect();
    if found != expected {
        let missing: Vec<&String> = expected.difference(&found).collect();
        let extra: Vec<&String> = found.difference(&expected).collect();
        return Err(Error::CheckpointMismatch(format!(
            "{} does not match a {} model: missing {missing:?}, unexpected {extra:?}",
            path.display(),
            backbone.name
        )));
    }

    let mut params = ParamStore::new(device.clone());
    for (name, view) in st.tensors() {
        params.insert(&name, view_to_tensor(&name, &view, device)?)?;
    }
    ModelHandle::from_parts(backbone, head, seed, scope, params)
}

fn expected_names(backbone: &BackboneSpec, _head: &HeadSpec) -> BTreeSet<String> {
    let mut names: BTreeSet<String> = backbone
        .name
        .param_specs()
        .into_iter()
        .map(|(n, _)| format!("backbone.{n}"))
        .collect();
    for n in [
        "head.fc1.weight",
        "head.fc1.bias",
        "head.fc2.weight",
        "head.fc2.bias",
    ] {
        names.insert(n.to_string());
    }
    names
}

impl ModelHandle {
    /// Overwrite this model's parameters with a checkpoint's, in place.
    /// The checkpoint must describe the same architecture and head.
    pub fn restore(&mut self, path: &Path) -> Result<()> {
        let bytes = read_file(path)?;
        let meta = read_metadata(path, &bytes)?;
        let backbone: crate::model::BackboneName = meta_field(&meta, "backbone", path)?.parse()?;
        let hidden: usize = meta_field(&meta, "head_hidden", path)?
            .parse()
            .map_err(|_| Error::CheckpointMismatch("bad head_hidden field".into()))?;
        if backbone != self.backbone().name || hidden != self.head().hidden_width {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint {} holds a {backbone} model with head {hidden}, \
                 cannot restore into a {} model with head {}",
                path.display(),
                self.backbone().name,
                self.head().hidden_width
            )));
        }
        let st = SafeTensors::deserialize(&bytes)
            .map_err(|e| Error::CheckpointMismatch(format!("{}: {e}", path.display())))?;
        let own: BTreeSet<String> = self.param_names().into_iter().collect();
        let found: BTreeSet<String> = st.names().iter().map(|s| s.to_string()).collect();
        if own != found {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint {} parameter names do not match the live model",
                path.display()
            )));
        }
        for (name, view) in st.tensors() {
            let tensor = view_to_tensor(&name, &view, self.device())?;
            self.store().set(&name, &tensor)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, BackboneName, DigestScope, WeightsInit};

    fn tiny_model(seed: u64) -> ModelHandle {
        let spec = BackboneSpec::new(BackboneName::TinyTest, WeightsInit::Random).unwrap();
        build_model(spec, HeadSpec::default(), seed, None, &Device::Cpu).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let model = tiny_model(21);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.safetensors");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path, &Device::Cpu).unwrap();

        assert_eq!(
            loaded.parameter_digest(DigestScope::All).unwrap(),
            model.parameter_digest(DigestScope::All).unwrap()
        );
        assert_eq!(loaded.backbone(), model.backbone());
        assert_eq!(loaded.seed(), model.seed());

        // Forward outputs agree exactly on a fixed batch.
        let res = BackboneName::TinyTest.input_resolution();
        let xs = Tensor::from_vec(
            (0..3 * res * res)
                .map(|i| (i % 97) as f32 / 97.0)
                .collect::<Vec<f32>>(),
            &[1, 3, res, res],
            &Device::Cpu,
        )
        .unwrap();
        assert_eq!(model.predict(&xs).unwrap(), loaded.predict(&xs).unwrap());
    }

    #[test]
    fn restore_overwrites_in_place() {
        let model_a = tiny_model(1);
        let mut model_b = tiny_model(2);
        assert_ne!(
            model_a.parameter_digest(DigestScope::All).unwrap(),
            model_b.parameter_digest(DigestScope::All).unwrap()
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.safetensors");
        save_checkpoint(&model_a, &path).unwrap();
        model_b.restore(&path).unwrap();
        assert_eq!(
            model_a.parameter_digest(DigestScope::All).unwrap(),
            model_b.parameter_digest(DigestScope::All).unwrap()
        );
    }

    #[test]
    fn restore_rejects_head_mismatch() {
        let model = tiny_model(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.safetensors");
        save_checkpoint(&model, &path).unwrap();

        let spec = BackboneSpec::new(BackboneName::TinyTest, WeightsInit::Random).unwrap();
        let mut other =
            build_model(spec, HeadSpec { hidden_width: 16 }, 1, None, &Device::Cpu).unwrap();
        assert!(matches!(
            other.restore(&path),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn missing_and_corrupt_files_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.safetensors");
        assert!(matches!(
            load_checkpoint(&missing, &Device::Cpu),
            Err(Error::MissingFile { .. })
        ));
        let corrupt = dir.path().join("bad.safetensors");
        std::fs::write(&corrupt, b"garbage").unwrap();
        assert!(matches!(
            load_checkpoint(&corrupt, &Device::Cpu),
            Err(Error::CheckpointMismatch(_))
        ));
    }
}
