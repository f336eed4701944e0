//! Functional neural-network layers over candle tensors.
//!
//! Everything is stateless: parameters come in as tensors, batch-norm
//! running statistics as `Var`s that the train-mode forward updates in
//! place. Convolution input layout is NCHW, kernels are OIHW.

use candle_core::{Tensor, Var, D};

use crate::error::Result;

/// 2-D convolution with optional bias and symmetric zero padding.
pub fn conv2d(
    xs: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let out = xs.conv2d(weight, padding, stride, 1, 1)?;
    Ok(match bias {
        Some(b) => {
            let c = b.dims1()?;
            out.broadcast_add(&b.reshape((1, c, 1, 1))?)?
        }
        None => out,
    })
}

/// Convolution with separate height/width padding (for 1x7 / 7x1 kernels).
/// Implemented as explicit zero padding followed by a valid convolution,
/// which is exactly equivalent.
pub fn conv2d_asym(
    xs: &Tensor,
    weight: &Tensor,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
) -> Result<Tensor> {
    let padded = zero_pad2d(xs, pad_h, pad_w)?;
    conv2d(&padded, weight, None, stride, 0)
}

/// Zero-pad the two spatial dimensions of an NCHW tensor.
pub fn zero_pad2d(xs: &Tensor, pad_h: usize, pad_w: usize) -> Result<Tensor> {
    let mut out = xs.clone();
    if pad_h > 0 {
        out = out.pad_with_zeros(D::Minus2, pad_h, pad_h)?;
    }
    if pad_w > 0 {
        out = out.pad_with_zeros(D::Minus1, pad_w, pad_w)?;
    }
    Ok(out)
}

/// Max pooling. A nonzero `padding` zero-pads first, which matches padded
/// max pooling only for non-negative inputs; every padded max pool in the
/// backbones sits after a ReLU, where that holds.
pub fn max_pool2d(xs: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let xs = zero_pad2d(xs, padding, padding)?;
    Ok(xs.max_pool2d_with_stride(kernel, stride)?)
}

/// Average pooling with zero padding counted in the divisor (the default
/// behavior of the reference implementations of both backbones).
pub fn avg_pool2d(xs: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let xs = zero_pad2d(xs, padding, padding)?;
    Ok(xs.avg_pool2d_with_stride(kernel, stride)?)
}

/// Global average pooling: NCHW -> NC.
pub fn global_avg_pool(xs: &Tensor) -> Result<Tensor> {
    Ok(xs.mean(D::Minus1)?.mean(D::Minus1)?)
}

/// Dense layer: `xs @ weight^T + bias`, weight shape [out, in].
pub fn linear(xs: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    Ok(xs.matmul(&weight.t()?)?.broadcast_add(bias)?)
}

/// Batch normalization over the channel dimension of an NCHW tensor.
///
/// Train mode normalizes with biased batch statistics (gradients flow
/// through them) and updates the running buffers in place:
/// `running = (1 - momentum) * running + momentum * batch`, using the
/// unbiased variance for the running update. Eval mode normalizes with the
/// detached running statistics.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm2d(
    xs: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Var,
    running_var: &Var,
    training: bool,
    momentum: f64,
    eps: f64,
) -> Result<Tensor> {
    let (b, c, h, w) = xs.dims4()?;
    let n = (b * h * w) as f64;
    let reshape = |t: &Tensor| t.reshape((1, c, 1, 1));

    let (mean, var) = if training {
        let mean = (xs.sum_keepdim((0, 2, 3))? / n)?;
        let centered = xs.broadcast_sub(&mean)?;
        let biased_var = (centered.sqr()?.sum_keepdim((0, 2, 3))? / n)?;

        // Running updates use detached stats so no graph is retained.
        let unbiased = if n > 1.0 {
            (biased_var.detach() * (n / (n - 1.0)))?
        } else {
            biased_var.detach()
        };
        let new_mean = ((running_mean.as_tensor() * (1.0 - momentum))?
            + (mean.detach().reshape(c)? * momentum)?)?;
        let new_var =
            ((running_var.as_tensor() * (1.0 - momentum))? + (unbiased.reshape(c)? * momentum)?)?;
        running_mean.set(&new_mean)?;
        running_var.set(&new_var)?;

        (mean, biased_var)
    } else {
        (
            reshape(&running_mean.as_tensor().detach())?,
            reshape(&running_var.as_tensor().detach())?,
        )
    };

    let normalized = xs
        .broadcast_sub(&mean)?
        .broadcast_div(&(var + eps)?.sqrt()?)?;
    Ok(normalized
        .broadcast_mul(&reshape(gamma)?)?
        .broadcast_add(&reshape(beta)?)?)
}
