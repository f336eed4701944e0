//! Inception-v3 feature extractor.
//!
//! Mirrors the reference implementation the exported ImageNet weights come
//! from, without the auxiliary classifier: stem convolutions, the 5x/6x/7x
//! mixed blocks, and global average pooling to a 2048-wide feature vector.
//! Every convolution is a BasicConv2d: bias-free conv, batch norm
//! (eps 1e-3), ReLU. Asymmetric 1x7/7x1/1x3/3x1 kernels use explicit zero
//! padding, which is equivalent to the reference's padded convolutions.

use candle_core::Tensor;

use crate::error::Result;
use crate::model::layers::{
    avg_pool2d, batch_norm2d, conv2d, conv2d_asym, global_avg_pool, max_pool2d,
};
use crate::model::params::ParamStore;

pub const FEATURE_DIM: usize = 2048;

const BN_EPS: f64 = 1e-3;
const BN_MOMENTUM: f64 = 0.1;

/// c7: bottleneck width of the 7x7-factorized blocks, per block.
const MIXED_6_C7: [(usize, usize); 4] = [(1, 128), (2, 160), (3, 160), (4, 192)];

/// (module prefix, out channels, in channels, kernel h, kernel w), in
/// forward order. This table fully determines the parameter set.
fn conv_table() -> Vec<(String, usize, usize, usize, usize)> {
    let mut t: Vec<(String, usize, usize, usize, usize)> = Vec::new();
    let mut push = |prefix: String, out: usize, inp: usize, kh: usize, kw: usize| {
        t.push((prefix, out, inp, kh, kw));
    };

    push("Conv2d_1a_3x3".into(), 32, 3, 3, 3);
    push("Conv2d_2a_3x3".into(), 32, 32, 3, 3);
    push("Conv2d_2b_3x3".into(), 64, 32, 3, 3);
    push("Conv2d_3b_1x1".into(), 80, 64, 1, 1);
    push("Conv2d_4a_3x3".into(), 192, 80, 3, 3);

    // Mixed_5b/5c/5d: 35x35 blocks with pool widths 32/64/64.
    for (suffix, inp, pool) in [("5b", 192, 32), ("5c", 256, 64), ("5d", 288, 64)] {
        let m = format!("Mixed_{suffix}");
        push(format!("{m}.branch1x1"), 64, inp, 1, 1);
        push(format!("{m}.branch5x5_1"), 48, inp, 1, 1);
        push(format!("{m}.branch5x5_2"), 64, 48, 5, 5);
        push(format!("{m}.branch3x3dbl_1"), 64, inp, 1, 1);
        push(format!("{m}.branch3x3dbl_2"), 96, 64, 3, 3);
        push(format!("{m}.branch3x3dbl_3"), 96, 96, 3, 3);
        push(format!("{m}.branch_pool"), pool, inp, 1, 1);
    }

    // Mixed_6a: grid reduction to 17x17.
    push("Mixed_6a.branch3x3".into(), 384, 288, 3, 3);
    push("Mixed_6a.branch3x3dbl_1".into(), 64, 288, 1, 1);
    push("Mixed_6a.branch3x3dbl_2".into(), 96, 64, 3, 3);
    push("Mixed_6a.branch3x3dbl_3".into(), 96, 96, 3, 3);

    // Mixed_6b..6e: factorized 7x7 blocks at 768 channels.
    for (idx, c7) in MIXED_6_C7 {
        let m = format!("Mixed_6{}", (b'a' + idx as u8) as char);
        push(format!("{m}.branch1x1"), 192, 768, 1, 1);
        push(format!("{m}.branch7x7_1"), c7, 768, 1, 1);
        push(format!("{m}.branch7x7_2"), c7, c7, 1, 7);
        push(format!("{m}.branch7x7_3"), 192, c7, 7, 1);
        push(format!("{m}.branch7x7dbl_1"), c7, 768, 1, 1);
        push(format!("{m}.branch7x7dbl_2"), c7, c7, 7, 1);
        push(format!("{m}.branch7x7dbl_3"), c7, c7, 1, 7);
        push(format!("{m}.branch7x7dbl_4"), c7, c7, 7, 1);
        push(format!("{m}.branch7x7dbl_5"), 192, c7, 1, 7);
        push(format!("{m}.branch_pool"), 192, 768, 1, 1);
    }

    // Mixed_7a: grid reduction to 8x8.
    push("Mixed_7a.branch3x3_1".into(), 192, 768, 1, 1);
    push("Mixed_7a.branch3x3_2".into(), 320, 192, 3, 3);
    push("Mixed_7a.branch7x7x3_1".into(), 192, 768, 1, 1);
    push("Mixed_7a.branch7x7x3_2".into(), 192, 192, 1, 7);
    push("Mixed_7a.branch7x7x3_3".into(), 192, 192, 7, 1);
    push("Mixed_7a.branch7x7x3_4".into(), 192, 192, 3, 3);

    // Mixed_7b/7c: expanded 8x8 blocks.
    for (suffix, inp) in [("7b", 1280), ("7c", 2048)] {
        let m = format!("Mixed_{suffix}");
        push(format!("{m}.branch1x1"), 320, inp, 1, 1);
        push(format!("{m}.branch3x3_1"), 384, inp, 1, 1);
        push(format!("{m}.branch3x3_2a"), 384, 384, 1, 3);
        push(format!("{m}.branch3x3_2b"), 384, 384, 3, 1);
        push(format!("{m}.branch3x3dbl_1"), 448, inp, 1, 1);
        push(format!("{m}.branch3x3dbl_2"), 384, 448, 3, 3);
        push(format!("{m}.branch3x3dbl_3a"), 384, 384, 1, 3);
        push(format!("{m}.branch3x3dbl_3b"), 384, 384, 3, 1);
        push(format!("{m}.branch_pool"), 192, inp, 1, 1);
    }

    t
}

pub fn param_specs() -> Vec<(String, Vec<usize>)> {
    let mut specs = Vec::new();
    for (prefix, out, inp, kh, kw) in conv_table() {
        specs.push((format!("{prefix}.conv.weight"), vec![out, inp, kh, kw]));
        for field in ["weight", "bias", "running_mean", "running_var"] {
            specs.push((format!("{prefix}.bn.{field}"), vec![out]));
        }
    }
    specs
}

struct Ctx<'a> {
    store: &'a ParamStore,
    training: bool,
}

impl Ctx<'_> {
    /// BasicConv2d: bias-free conv + batch norm + ReLU. `pad` is (h, w).
    fn basic(
        &self,
        prefix: &str,
        xs: &Tensor,
        stride: usize,
        pad: (usize, usize),
    ) -> Result<Tensor> {
        let weight = self
            .store
            .tensor(&format!("backbone.{prefix}.conv.weight"))?;
        let x = if pad.0 == pad.1 {
            conv2d(xs, &weight, None, stride, pad.0)?
        } else {
            conv2d_asym(xs, &weight, stride, pad.0, pad.1)?
        };
        let bn = format!("backbone.{prefix}.bn");
        let x = batch_norm2d(
            &x,
            &self.store.tensor(&format!("{bn}.weight"))?,
            &self.store.tensor(&format!("{bn}.bias"))?,
            self.store.get(&format!("{bn}.running_mean"))?,
            self.store.get(&format!("{bn}.running_var"))?,
            self.training,
            BN_MOMENTUM,
            BN_EPS,
        )?;
        Ok(x.relu()?)
    }

    fn mixed_5(&self, m: &str, xs: &Tensor) -> Result<Tensor> {
        let b1 = self.basic(&format!("{m}.branch1x1"), xs, 1, (0, 0))?;
        let b5 = self.basic(&format!("{m}.branch5x5_1"), xs, 1, (0, 0))?;
        let b5 = self.basic(&format!("{m}.branch5x5_2"), &b5, 1, (2, 2))?;
        let bd = self.basic(&format!("{m}.branch3x3dbl_1"), xs, 1, (0, 0))?;
        let bd = self.basic(&format!("{m}.branch3x3dbl_2"), &bd, 1, (1, 1))?;
        let bd = self.basic(&format!("{m}.branch3x3dbl_3"), &bd, 1, (1, 1))?;
        let bp = avg_pool2d(xs, 3, 1, 1)?;
        let bp = self.basic(&format!("{m}.branch_pool"), &bp, 1, (0, 0))?;
        Ok(Tensor::cat(&[b1, b5, bd, bp], 1)?)
    }

    fn mixed_6a(&self, xs: &Tensor) -> Result<Tensor> {
        let b3 = self.basic("Mixed_6a.branch3x3", xs, 2, (0, 0))?;
        let bd = self.basic("Mixed_6a.branch3x3dbl_1", xs, 1, (0, 0))?;
        let bd = self.basic("Mixed_6a.branch3x3dbl_2", &bd, 1, (1, 1))?;
        let bd = self.basic("Mixed_6a.branch3x3dbl_3", &bd, 2, (0, 0))?;
        let bp = max_pool2d(xs, 3, 2, 0)?;
        Ok(Tensor::cat(&[b3, bd, bp], 1)?)
    }

    fn mixed_6(&self, m: &str, xs: &Tensor) -> Result<Tensor> {
        let b1 = self.basic(&format!("{m}.branch1x1"), xs, 1, (0, 0))?;
        let b7 = self.basic(&format!("{m}.branch7x7_1"), xs, 1, (0, 0))?;
        let b7 = self.basic(&format!("{m}.branch7x7_2"), &b7, 1, (0, 3))?;
        let b7 = self.basic(&format!("{m}.branch7x7_3"), &b7, 1, (3, 0))?;
        let bd = self.basic(&format!("{m}.branch7x7dbl_1"), xs, 1, (0, 0))?;
        let bd = self.basic(&format!("{m}.branch7x7dbl_2"), &bd, 1, (3, 0))?;
        let bd = self.basic(&format!("{m}.branch7x7dbl_3"), &bd, 1, (0, 3))?;
        let bd = self.basic(&format!("{m}.branch7x7dbl_4"), &bd, 1, (3, 0))?;
        let bd = self.basic(&format!("{m}.branch7x7dbl_5"), &bd, 1, (0, 3))?;
        let bp = avg_pool2d(xs, 3, 1, 1)?;
        let bp = self.basic(&format!("{m}.branch_pool"), &bp, 1, (0, 0))?;
        Ok(Tensor::cat(&[b1, b7, bd, bp], 1)?)
    }

    fn mixed_7a(&self, xs: &Tensor) -> Result<Tensor> {
        let b3 = self.basic("Mixed_7a.branch3x3_1", xs, 1, (0, 0))?;
        let b3 = self.basic("Mixed_7a.branch3x3_2", &b3, 2, (0, 0))?;
        let b7 = self.basic("Mixed_7a.branch7x7x3_1", xs, 1, (0, 0))?;
        let b7 = self.basic("Mixed_7a.branch7x7x3_2", &b7, 1, (0, 3))?;
        let b7 = self.basic("Mixed_7a.branch7x7x3_3", &b7, 1, (3, 0))?;
        let b7 = self.basic("Mixed_7a.branch7x7x3_4", &b7, 2, (0, 0))?;
        let bp = max_pool2d(xs, 3, 2, 0)?;
        Ok(Tensor::cat(&[b3, b7, bp], 1)?)
    }

    fn mixed_7(&self, m: &str, xs: &Tensor) -> Result<Tensor> {
        let b1 = self.basic(&format!("{m}.branch1x1"), xs, 1, (0, 0))?;
        let b3 = self.basic(&format!("{m}.branch3x3_1"), xs, 1, (0, 0))?;
        let b3a = self.basic(&format!("{m}.branch3x3_2a"), &b3, 1, (0, 1))?;
        let b3b = self.basic(&format!("{m}.branch3x3_2b"), &b3, 1, (1, 0))?;
        let b3 = Tensor::cat(&[b3a, b3b], 1)?;
        let bd = self.basic(&format!("{m}.branch3x3dbl_1"), xs, 1, (0, 0))?;
        let bd = self.basic(&format!("{m}.branch3x3dbl_2"), &bd, 1, (1, 1))?;
        let bda = self.basic(&format!("{m}.branch3x3dbl_3a"), &bd, 1, (0, 1))?;
        let bdb = self.basic(&format!("{m}.branch3x3dbl_3b"), &bd, 1, (1, 0))?;
        let bd = Tensor::cat(&[bda, bdb], 1)?;
        let bp = avg_pool2d(xs, 3, 1, 1)?;
        let bp = self.basic(&format!("{m}.branch_pool"), &bp, 1, (0, 0))?;
        Ok(Tensor::cat(&[b1, b3, bd, bp], 1)?)
    }
}

pub fn forward(store: &ParamStore, xs: &Tensor, training: bool) -> Result<Tensor> {
    let ctx = Ctx { store, training };

    // Stem: 299 -> 35x35x192.
    let mut x = ctx.basic("Conv2d_1a_3x3", xs, 2, (0, 0))?;
    x = ctx.basic("Conv2d_2a_3x3", &x, 1, (0, 0))?;
    x = ctx.basic("Conv2d_2b_3x3", &x, 1, (1, 1))?;
    x = max_pool2d(&x, 3, 2, 0)?;
    x = ctx.basic("Conv2d_3b_1x1", &x, 1, (0, 0))?;
    x = ctx.basic("Conv2d_4a_3x3", &x, 1, (0, 0))?;
    x = max_pool2d(&x, 3, 2, 0)?;

    for m in ["Mixed_5b", "Mixed_5c", "Mixed_5d"] {
        x = ctx.mixed_5(m, &x)?;
    }
    x = ctx.mixed_6a(&x)?;
    for m in ["Mixed_6b", "Mixed_6c", "Mixed_6d", "Mixed_6e"] {
        x = ctx.mixed_6(m, &x)?;
    }
    x = ctx.mixed_7a(&x)?;
    for m in ["Mixed_7b", "Mixed_7c"] {
        x = ctx.mixed_7(m, &x)?;
    }

    global_avg_pool(&x)
}
