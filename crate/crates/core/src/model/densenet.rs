//! DenseNet-169 feature extractor.
//!
//! Structure and parameter names mirror the reference implementation the
//! exported ImageNet weights come from: a 7x7 stem, four dense blocks of
//! (6, 12, 32, 32) layers with growth rate 32 and bottleneck width 128,
//! transitions that halve channels and resolution, and a final norm. The
//! classifier layer is not part of the backbone; the pooled 1664-wide
//! feature vector feeds the shared head.

use candle_core::Tensor;

use crate::error::Result;
use crate::model::layers::{avg_pool2d, batch_norm2d, conv2d, global_avg_pool, max_pool2d};
use crate::model::params::ParamStore;

pub const FEATURE_DIM: usize = 1664;

const BLOCK_LAYERS: [usize; 4] = [6, 12, 32, 32];
const GROWTH: usize = 32;
const BOTTLENECK: usize = 4 * GROWTH;
const INIT_CHANNELS: usize = 64;
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

fn push_norm(specs: &mut Vec<(String, Vec<usize>)>, prefix: &str, channels: usize) {
    for field in ["weight", "bias", "running_mean", "running_var"] {
        specs.push((format!("{prefix}.{field}"), vec![channels]));
    }
}

pub fn param_specs() -> Vec<(String, Vec<usize>)> {
    let mut specs = Vec::new();
    specs.push(("features.conv0.weight".into(), vec![INIT_CHANNELS, 3, 7, 7]));
    push_norm(&mut specs, "features.norm0", INIT_CHANNELS);

    let mut channels = INIT_CHANNELS;
    for (b, &layers) in BLOCK_LAYERS.iter().enumerate() {
        for l in 1..=layers {
            let prefix = format!("features.denseblock{}.denselayer{l}", b + 1);
            let in_c = channels + (l - 1) * GROWTH;
            push_norm(&mut specs, &format!("{prefix}.norm1"), in_c);
            specs.push((
                format!("{prefix}.conv1.weight"),
                vec![BOTTLENECK, in_c, 1, 1],
            ));
            push_norm(&mut specs, &format!("{prefix}.norm2"), BOTTLENECK);
            specs.push((
                format!("{prefix}.conv2.weight"),
                vec![GROWTH, BOTTLENECK, 3, 3],
            ));
        }
        channels += layers * GROWTH;
        if b + 1 < BLOCK_LAYERS.len() {
            let prefix = format!("features.transition{}", b + 1);
            push_norm(&mut specs, &format!("{prefix}.norm"), channels);
            specs.push((
                format!("{prefix}.conv.weight"),
                vec![channels / 2, channels, 1, 1],
            ));
            channels /= 2;
        }
    }
    push_norm(&mut specs, "features.norm5", channels);
    debug_assert_eq!(channels, FEATURE_DIM);
    specs
}

fn bn(store: &ParamStore, prefix: &str, xs: &Tensor, training: bool) -> Result<Tensor> {
    batch_norm2d(
        xs,
        &store.tensor(&format!("{prefix}.weight"))?,
        &store.tensor(&format!("{prefix}.bias"))?,
        store.get(&format!("{prefix}.running_mean"))?,
        store.get(&format!("{prefix}.running_var"))?,
        training,
        BN_MOMENTUM,
        BN_EPS,
    )
}

pub fn forward(store: &ParamStore, xs: &Tensor, training: bool) -> Result<Tensor> {
    let conv0 = store.tensor("backbone.features.conv0.weight")?;
    let mut x = conv2d(xs, &conv0, None, 2, 3)?;
    x = bn(store, "backbone.features.norm0", &x, training)?.relu()?;
    x = max_pool2d(&x, 3, 2, 1)?;

    for (b, &layers) in BLOCK_LAYERS.iter().enumerate() {
        let mut feats = vec![x];
        for l in 1..=layers {
            let prefix = format!("backbone.features.denseblock{}.denselayer{l}", b + 1);
            let input = Tensor::cat(&feats, 1)?;
            let y = bn(store, &format!("{prefix}.norm1"), &input, training)?.relu()?;
            let y = conv2d(
                &y,
                &store.tensor(&format!("{prefix}.conv1.weight"))?,
                None,
                1,
                0,
            )?;
            let y = bn(store, &format!("{prefix}.norm2"), &y, training)?.relu()?;
            let y = conv2d(
                &y,
                &store.tensor(&format!("{prefix}.conv2.weight"))?,
                None,
                1,
                1,
            )?;
            feats.push(y);
        }
        x = Tensor::cat(&feats, 1)?;
        if b + 1 < BLOCK_LAYERS.len() {
            let prefix = format!("backbone.features.transition{}", b + 1);
            x = bn(store, &format!("{prefix}.norm"), &x, training)?.relu()?;
            x = conv2d(
                &x,
                &store.tensor(&format!("{prefix}.conv.weight"))?,
                None,
                1,
                0,
            )?;
            x = avg_pool2d(&x, 2, 2, 0)?;
        }
    }

    x = bn(store, "backbone.features.norm5", &x, training)?.relu()?;
    global_avg_pool(&x)
}
