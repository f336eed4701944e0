//! Classifier construction: a convolutional backbone plus a fixed binary
//! head (global average pool, dense 1024 with ReLU, dense 1 with sigmoid).
//!
//! The same head shape serves the flip pretext task and the downstream
//! task, so transferring between them swaps no layers; pretraining reaches
//! every parameter. Which parameters actually train is controlled by a
//! trainable scope (head only vs full network), not by rebuilding.

pub mod checkpoint;
mod densenet;
mod inception;
pub mod layers;
pub mod params;
pub mod preprocess;
mod tiny;

use std::fmt;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use params::{is_buffer_name, ParamStore};
use preprocess::{Normalization, PreprocessSpec};

const BACKBONE_INIT_SALT: u64 = 0x6261636b; // "back"
const HEAD_INIT_SALT: u64 = 0x68656164; // "head"

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneName {
    Densenet169,
    Inceptionv3,
    TinyTest,
}

impl BackboneName {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneName::Densenet169 => "densenet169",
            BackboneName::Inceptionv3 => "inceptionv3",
            BackboneName::TinyTest => "tiny_test",
        }
    }

    /// Square input side in pixels; fixed per architecture.
    pub fn input_resolution(self) -> usize {
        match self {
            BackboneName::Densenet169 => 224,
            BackboneName::Inceptionv3 => 299,
            BackboneName::TinyTest => 64,
        }
    }

    /// Width of the pooled feature vector feeding the head.
    pub fn feature_dim(self) -> usize {
        match self {
            BackboneName::Densenet169 => densenet::FEATURE_DIM,
            BackboneName::Inceptionv3 => inception::FEATURE_DIM,
            BackboneName::TinyTest => tiny::FEATURE_DIM,
        }
    }

    /// Input normalization the backbone's weights expect.
    pub fn normalization(self) -> Normalization {
        match self {
            BackboneName::Densenet169 => Normalization::ImageNet,
            // The reference InceptionV3 rescales its (already ImageNet
            // normalized) input back to [-1, 1]; the two steps compose to
            // exactly 2x - 1 on [0, 1] pixels.
            BackboneName::Inceptionv3 => Normalization::SymmetricUnit,
            BackboneName::TinyTest => Normalization::ZeroOne,
        }
    }

    /// Parameter names and shapes, in registration order, without the
    /// `backbone.` prefix.
    fn param_specs(self) -> Vec<(String, Vec<usize>)> {
        match self {
            BackboneName::Densenet169 => densenet::param_specs(),
            BackboneName::Inceptionv3 => inception::param_specs(),
            BackboneName::TinyTest => tiny::param_specs(),
        }
    }

    fn forward(self, store: &ParamStore, xs: &Tensor, training: bool) -> Result<Tensor> {
        match self {
            BackboneName::Densenet169 => densenet::forward(store, xs, training),
            BackboneName::Inceptionv3 => inception::forward(store, xs, training),
            BackboneName::TinyTest => tiny::forward(store, xs, training),
        }
    }
}

impl std::str::FromStr for BackboneName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "densenet169" => Ok(BackboneName::Densenet169),
            "inceptionv3" => Ok(BackboneName::Inceptionv3),
            "tiny_test" => Ok(BackboneName::TinyTest),
            other => Err(Error::Config(format!(
                "unknown backbone {other:?} (expected densenet169, inceptionv3, or tiny_test)"
            ))),
        }
    }
}

impl fmt::Display for BackboneName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightsInit {
    ImagenetPretrained,
    Random,
}

impl WeightsInit {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightsInit::ImagenetPretrained => "imagenet_pretrained",
            WeightsInit::Random => "random",
        }
    }
}

impl std::str::FromStr for WeightsInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imagenet_pretrained" => Ok(WeightsInit::ImagenetPretrained),
            "random" => Ok(WeightsInit::Random),
            other => Err(Error::Config(format!(
                "unknown weights_init {other:?} (expected imagenet_pretrained or random)"
            ))),
        }
    }
}

impl fmt::Display for WeightsInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneSpec {
    pub name: BackboneName,
    pub weights_init: WeightsInit,
}

impl BackboneSpec {
    pub fn new(name: BackboneName, weights_init: WeightsInit) -> Result<Self> {
        if name == BackboneName::TinyTest && weights_init == WeightsInit::ImagenetPretrained {
            return Err(Error::Config(
                "tiny_test has no pretrained weights; use weights_init = random".into(),
            ));
        }
        Ok(BackboneSpec { name, weights_init })
    }

    pub fn preprocess(&self) -> PreprocessSpec {
        PreprocessSpec {
            resolution: self.name.input_resolution(),
            normalization: self.name.normalization(),
        }
    }
}

/// Classification head: dense `hidden_width` with ReLU, then one sigmoid
/// unit. Both tasks are binary and share this exact shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadSpec {
    pub hidden_width: usize,
}

impl Default for HeadSpec {
    fn default() -> Self {
        HeadSpec { hidden_width: 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainableScope {
    HeadOnly,
    FullNetwork,
}

impl TrainableScope {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainableScope::HeadOnly => "head_only",
            TrainableScope::FullNetwork => "full_network",
        }
    }
}

impl std::str::FromStr for TrainableScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head_only" => Ok(TrainableScope::HeadOnly),
            "full_network" => Ok(TrainableScope::FullNetwork),
            other => Err(Error::Config(format!(
                "unknown trainable scope {other:?} (expected head_only or full_network)"
            ))),
        }
    }
}

impl fmt::Display for TrainableScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameter subset selected when digesting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigestScope {
    Backbone,
    Head,
    All,
}

/// A built classifier: backbone + head parameters on a device, with a
/// trainable scope switch.
pub struct ModelHandle {
    backbone: BackboneSpec,
    head: HeadSpec,
    seed: u64,
    scope: TrainableScope,
    params: ParamStore,
}

impl std::fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelHandle")
            .field("backbone", &self.backbone)
            .field("head", &self.head)
            .field("seed", &self.seed)
            .field("scope", &self.scope)
            .field("params", &self.params.len())
            .finish()
    }
}

/// Build a model. Backbone weights come from `weights_dir/<name>.safetensors`
/// when pretrained weights are requested, or from the seeded initializer
/// otherwise; head weights are always freshly initialized from the seed.
pub fn build_model(
    backbone: BackboneSpec,
    head: HeadSpec,
    seed: u64,
    weights_dir: Option<&Path>,
    device: &Device,
) -> Result<ModelHandle> {
    BackboneSpec::new(backbone.name, backbone.weights_init)?;
    if head.hidden_width == 0 {
        return Err(Error::Config("head hidden_width must be positive".into()));
    }
    let mut params = ParamStore::new(device.clone());

    match backbone.weights_init {
        WeightsInit::Random => {
            let mut rng = seeded_rng(derive_seed(seed, BACKBONE_INIT_SALT));
            for (name, shape) in backbone.name.param_specs() {
                let init = init_for(&mut rng, &name, &shape, device)?;
                params.insert(&format!("backbone.{name}"), init)?;
            }
        }
        WeightsInit::ImagenetPretrained => {
            let path = pretrained_weights_path(backbone.name, weights_dir);
            load_pretrained(&mut params, backbone.name, &path, device)?;
        }
    }

    let mut rng = seeded_rng(derive_seed(seed, HEAD_INIT_SALT));
    let feature_dim = backbone.name.feature_dim();
    params.insert(
        "head.fc1.weight",
        params::linear_init(&mut rng, head.hidden_width, feature_dim, device)?,
    )?;
    params.insert(
        "head.fc1.bias",
        params::zeros(&[head.hidden_width], device)?,
    )?;
    // The output layer starts at zero so initial scores sit exactly on the
    // decision threshold; the first gradient steps set the prediction signs.
    params.insert(
        "head.fc2.weight",
        params::zeros(&[1, head.hidden_width], device)?,
    )?;
    params.insert("head.fc2.bias", params::zeros(&[1], device)?)?;

    Ok(ModelHandle {
        backbone,
        head,
        seed,
        scope: TrainableScope::HeadOnly,
        params,
    })
}

/// Initializer keyed on parameter kind: convolution kernels and dense
/// weights are glorot uniform; biases, batch-norm shifts, and running means
/// start at zero; batch-norm scales and running variances start at one.
fn init_for(rng: &mut ChaCha12Rng, name: &str, shape: &[usize], device: &Device) -> Result<Tensor> {
    match shape.len() {
        4 => params::conv_init(rng, shape[0], shape[1], shape[2], shape[3], device),
        2 => params::linear_init(rng, shape[0], shape[1], device),
        1 if name.ends_with("running_var") => params::ones(shape, device),
        1 if name.ends_with("running_mean") => params::zeros(shape, device),
        1 if name.ends_with("bias") => params::zeros(shape, device),
        1 if name.ends_with("weight") => params::ones(shape, device),
        _ => Err(Error::Model(format!(
            "no initializer for parameter {name:?} with shape {shape:?}"
        ))),
    }
}

fn pretrained_weights_path(name: BackboneName, weights_dir: Option<&Path>) -> PathBuf {
    let dir = weights_dir.unwrap_or_else(|| Path::new("weights"));
    dir.join(format!("{}.safetensors", name.as_str()))
}

fn load_pretrained(
    params: &mut ParamStore,
    name: BackboneName,
    path: &Path,
    device: &Device,
) -> Result<()> {
    if !path.is_file() {
        return Err(Error::WeightsUnavailable {
            arch: name.as_str().to_string(),
            path: path.to_path_buf(),
        });
    }
    let tensors = checkpoint::read_tensor_file(path, device)?;
    let specs = name.param_specs();
    for (pname, shape) in &specs {
        let tensor = tensors.get(pname.as_str()).ok_or_else(|| {
            Error::CheckpointMismatch(format!(
                "weights file {} is missing tensor {pname:?}",
                path.display()
            ))
        })?;
        if tensor.dims() != shape.as_slice() {
            return Err(Error::CheckpointMismatch(format!(
                "tensor {pname:?} in {} has shape {:?}, expected {shape:?}",
                path.display(),
                tensor.dims()
            )));
        }
        params.insert(&format!("backbone.{pname}"), tensor.clone())?;
    }
    if tensors.len() != specs.len() {
        let expected: std::collections::BTreeSet<&str> =
            specs.iter().map(|(n, _)| n.as_str()).collect();
        let extra: Vec<&str> = tensors
            .keys()
            .map(String::as_str)
            .filter(|n| !expected.contains(n))
            .collect();
        return Err(Error::CheckpointMismatch(format!(
            "weights file {} contains unexpected tensors: {extra:?}",
            path.display()
        )));
    }
    Ok(())
}

impl ModelHandle {
    /// Assemble a handle from already-loaded parts (checkpoint restore).
    pub(crate) fn from_parts(
        backbone: BackboneSpec,
        head: HeadSpec,
        seed: u64,
        scope: TrainableScope,
        params: ParamStore,
    ) -> Result<ModelHandle> {
        Ok(ModelHandle {
            backbone,
            head,
            seed,
            scope,
            params,
        })
    }

    pub fn backbone(&self) -> &BackboneSpec {
        &self.backbone
    }

    pub fn head(&self) -> &HeadSpec {
        &self.head
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    pub fn preprocess(&self) -> PreprocessSpec {
        self.backbone.preprocess()
    }

    pub fn trainable_scope(&self) -> TrainableScope {
        self.scope
    }

    pub fn set_trainable_scope(&mut self, scope: TrainableScope) {
        self.scope = scope;
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.names().into_iter().map(String::from).collect()
    }

    pub fn param_shapes(&self) -> std::collections::BTreeMap<String, Vec<usize>> {
        self.params.shapes()
    }

    pub fn param_count(&self) -> usize {
        self.params.total_elements()
    }

    pub(crate) fn store(&self) -> &ParamStore {
        &self.params
    }

    /// The parameters the current scope trains, in name order. Batch-norm
    /// running statistics are buffers, never trained under any scope.
    pub fn trainable_params(&self) -> Vec<(String, candle_core::Var)> {
        self.params
            .iter()
            .filter(|(name, _)| {
                !is_buffer_name(name)
                    && match self.scope {
                        TrainableScope::HeadOnly => name.starts_with("head."),
                        TrainableScope::FullNetwork => true,
                    }
            })
            .map(|(name, var)| (name.to_string(), var.clone()))
            .collect()
    }

    fn check_input(&self, xs: &Tensor) -> Result<()> {
        let (_, c, h, w) = xs.dims4().map_err(|_| {
            Error::Model(format!(
                "expected an NCHW image batch, got shape {:?}",
                xs.dims()
            ))
        })?;
        let r = self.backbone.name.input_resolution();
        if c != 3 || h != r || w != r {
            return Err(Error::Model(format!(
                "{} expects [N, 3, {r}, {r}] input, got {:?}",
                self.backbone.name,
                xs.dims()
            )));
        }
        Ok(())
    }

    /// Backbone embedding in eval mode: image batch -> [N, feature_dim].
    pub fn features(&self, xs: &Tensor) -> Result<Tensor> {
        self.check_input(xs)?;
        self.backbone.name.forward(&self.params, xs, false)
    }

    /// Forward pass: batch of images -> one probability per image.
    ///
    /// `training` selects batch-norm behavior (batch statistics + running
    /// updates vs frozen running statistics). Under a head-only scope the
    /// backbone always runs in eval mode and its output is detached, so no
    /// gradient or statistics update can touch backbone state.
    pub fn forward(&self, xs: &Tensor, training: bool) -> Result<Tensor> {
        self.check_input(xs)?;
        let head_only = self.scope == TrainableScope::HeadOnly;
        let backbone_training = training && !head_only;
        let features = self
            .backbone
            .name
            .forward(&self.params, xs, backbone_training)?;
        let features = if head_only {
            features.detach()
        } else {
            features
        };

        let hidden = layers::linear(
            &features,
            &self.params.tensor("head.fc1.weight")?,
            &self.params.tensor("head.fc1.bias")?,
        )?
        .relu()?;
        let logits = layers::linear(
            &hidden,
            &self.params.tensor("head.fc2.weight")?,
            &self.params.tensor("head.fc2.bias")?,
        )?;
        let probs = candle_nn::ops::sigmoid(&logits)?;
        Ok(probs.squeeze(1)?)
    }

    /// Convenience: forward in eval mode, returning f64 probabilities.
    pub fn predict(&self, xs: &Tensor) -> Result<Vec<f64>> {
        let probs = self.forward(xs, false)?;
        Ok(probs.to_vec1::<f32>()?.into_iter().map(f64::from).collect())
    }

    /// Hash of the selected parameter subset's exact bytes.
    pub fn parameter_digest(&self, scope: DigestScope) -> Result<String> {
        self.params.digest(|name| match scope {
            DigestScope::Backbone => name.starts_with("backbone."),
            DigestScope::Head => name.starts_with("head."),
            DigestScope::All => true,
        })
    }
}
