//! Desk-scale test backbone: three stride-2 convolution blocks
//! (8/16/32 channels) with ReLU, then global average pooling.
//!
//! Small enough (a few thousand parameters) to train end-to-end on CPU in
//! seconds, which is what the toy pipeline and the trainer contract tests
//! run on. No batch norm, so forward is identical in train and eval mode.

use candle_core::Tensor;

use crate::error::Result;
use crate::model::layers::{conv2d, global_avg_pool};
use crate::model::params::ParamStore;

pub const FEATURE_DIM: usize = 32;

const CHANNELS: [usize; 4] = [3, 8, 16, 32];

pub fn param_specs() -> Vec<(String, Vec<usize>)> {
    let mut specs = Vec::new();
    for i in 0..3 {
        let (c_in, c_out) = (CHANNELS[i], CHANNELS[i + 1]);
        specs.push((format!("conv{}.weight", i + 1), vec![c_out, c_in, 3, 3]));
        specs.push((format!("conv{}.bias", i + 1), vec![c_out]));
    }
    specs
}

pub fn forward(store: &ParamStore, xs: &Tensor, _training: bool) -> Result<Tensor> {
    let mut out = xs.clone();
    for i in 1..=3 {
        let weight = store.tensor(&format!("backbone.conv{i}.weight"))?;
        let bias = store.tensor(&format!("backbone.conv{i}.bias"))?;
        out = conv2d(&out, &weight, Some(&bias), 2, 1)?.relu()?;
    }
    global_avg_pool(&out)
}
