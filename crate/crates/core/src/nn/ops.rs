//! Layer kernels over HWC-ordered slices, plus checked tensor-level wrappers.
//!
//! Image tensors are `[height, width, channels]`; conv weights are
//! `[k, k, in_channels, out_channels]` so the innermost loop runs over output
//! channels.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// "Same" zero-padded convolution, stride 1, odd kernel `k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_same_forward<T: Scalar>(
    input: &[T],
    height: usize,
    width: usize,
    in_ch: usize,
    weights: &[T],
    bias: &[T],
    k: usize,
    out_ch: usize,
    out: &mut [T],
) {
    let pad = k / 2;
    for y in 0..height {
        for x in 0..width {
            let o = &mut out[(y * width + x) * out_ch..][..out_ch];
            o.copy_from_slice(bias);
            for ky in 0..k {
                let Some(iy) = (y + ky).checked_sub(pad).filter(|&v| v < height) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (x + kx).checked_sub(pad).filter(|&v| v < width) else {
                        continue;
                    };
                    let px = &input[(iy * width + ix) * in_ch..][..in_ch];
                    let tap = &weights[(ky * k + kx) * in_ch * out_ch..][..in_ch * out_ch];
                    for (&a, row) in px.iter().zip(tap.chunks_exact(out_ch)) {
                        for (ov, &wv) in o.iter_mut().zip(row) {
                            *ov += a * wv;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and (optionally) writes the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_same_backward<T: Scalar>(
    input: &[T],
    height: usize,
    width: usize,
    in_ch: usize,
    weights: &[T],
    k: usize,
    out_ch: usize,
    grad_out: &[T],
    mut grad_in: Option<&mut [T]>,
    grad_w: &mut [T],
    grad_b: &mut [T],
) {
    let pad = k / 2;
    if let Some(gi) = grad_in.as_deref_mut() {
        gi.fill(T::zero());
    }
    for y in 0..height {
        for x in 0..width {
            let g = &grad_out[(y * width + x) * out_ch..][..out_ch];
            for (gb, &gv) in grad_b.iter_mut().zip(g) {
                *gb += gv;
            }
            for ky in 0..k {
                let Some(iy) = (y + ky).checked_sub(pad).filter(|&v| v < height) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (x + kx).checked_sub(pad).filter(|&v| v < width) else {
                        continue;
                    };
                    let base = (iy * width + ix) * in_ch;
                    let px = &input[base..][..in_ch];
                    let tap_off = (ky * k + kx) * in_ch * out_ch;
                    let gw_tap = &mut grad_w[tap_off..][..in_ch * out_ch];
                    for (&a, gw_row) in px.iter().zip(gw_tap.chunks_exact_mut(out_ch)) {
                        for (gw, &gv) in gw_row.iter_mut().zip(g) {
                            *gw += a * gv;
                        }
                    }
                    if let Some(gi) = grad_in.as_deref_mut() {
                        let w_tap = &weights[tap_off..][..in_ch * out_ch];
                        let gpx = &mut gi[base..][..in_ch];
                        for (gp, w_row) in gpx.iter_mut().zip(w_tap.chunks_exact(out_ch)) {
                            let mut acc = T::zero();
                            for (&wv, &gv) in w_row.iter().zip(g) {
                                acc += wv * gv;
                            }
                            *gp += acc;
                        }
                    }
                }
            }
        }
    }
}

/// 2x2 stride-2 max pool. `argmax[o]` is the flat input offset that produced `out[o]`;
/// the first maximum in scan order wins ties.
pub(crate) fn maxpool2_forward<T: Scalar>(
    input: &[T],
    height: usize,
    width: usize,
    ch: usize,
    out: &mut [T],
    argmax: &mut [usize],
) {
    let (oh, ow) = (height / 2, width / 2);
    for oy in 0..oh {
        for ox in 0..ow {
            for c in 0..ch {
                let mut best = (2 * oy * width + 2 * ox) * ch + c;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * oy + dy) * width + 2 * ox + dx) * ch + c;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                let o = (oy * ow + ox) * ch + c;
                out[o] = input[best];
                argmax[o] = best;
            }
        }
    }
}

pub(crate) fn maxpool2_backward<T: Scalar>(grad_out: &[T], argmax: &[usize], grad_in: &mut [T]) {
    grad_in.fill(T::zero());
    for (&g, &src) in grad_out.iter().zip(argmax) {
        grad_in[src] += g;
    }
}

pub(crate) fn avgpool_global_forward<T: Scalar>(input: &[T], ch: usize, out: &mut [T]) {
    out.fill(T::zero());
    let n = input.len() / ch;
    for px in input.chunks_exact(ch) {
        for (o, &v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    let scale = T::one() / T::lit(n as f64);
    for o in out.iter_mut() {
        *o *= scale;
    }
}

pub(crate) fn avgpool_global_backward<T: Scalar>(grad_out: &[T], grad_in: &mut [T]) {
    let ch = grad_out.len();
    let scale = T::one() / T::lit((grad_in.len() / ch) as f64);
    for px in grad_in.chunks_exact_mut(ch) {
        for (g, &go) in px.iter_mut().zip(grad_out) {
            *g = go * scale;
        }
    }
}

/// `out = bias + input · weights`, weights `[inputs, units]`.
pub(crate) fn dense_forward<T: Scalar>(input: &[T], weights: &[T], bias: &[T], out: &mut [T]) {
    let units = bias.len();
    out.copy_from_slice(bias);
    for (&a, row) in input.iter().zip(weights.chunks_exact(units)) {
        for (o, &w) in out.iter_mut().zip(row) {
            *o += a * w;
        }
    }
}

pub(crate) fn dense_backward<T: Scalar>(
    input: &[T],
    weights: &[T],
    grad_out: &[T],
    grad_in: Option<&mut [T]>,
    grad_w: &mut [T],
    grad_b: &mut [T],
) {
    let units = grad_out.len();
    for (gb, &g) in grad_b.iter_mut().zip(grad_out) {
        *gb += g;
    }
    for (&a, gw_row) in input.iter().zip(grad_w.chunks_exact_mut(units)) {
        for (gw, &g) in gw_row.iter_mut().zip(grad_out) {
            *gw += a * g;
        }
    }
    if let Some(gi) = grad_in {
        for (gp, w_row) in gi.iter_mut().zip(weights.chunks_exact(units)) {
            let mut acc = T::zero();
            for (&w, &g) in w_row.iter().zip(grad_out) {
                acc += w * g;
            }
            *gp = acc;
        }
    }
}

pub(crate) fn relu_inplace<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Masks `grad` by the post-activation values (`out > 0`).
pub(crate) fn relu_backward_inplace<T: Scalar>(out: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Returns `(-log softmax(logits)[label], softmax(logits) - onehot(label))`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if logits.len() < 2 {
        return Err(Error::InvalidShape {
            shape: vec![logits.len()],
            reason: "softmax needs at least two logits".into(),
        });
    }
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    let loss = log_sum - (logits[label] - max);
    let mut grad = softmax(logits);
    grad[label] -= T::one();
    Ok((loss, grad))
}

fn image_dims<T>(t: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::InvalidShape {
            shape: t.shape().to_vec(),
            reason: "expected an HxWxC image tensor".into(),
        }),
    }
}

/// Checked "same"-padded convolution of an `HxWxC` input with `kxkxCxF` weights.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (h, w, c) = image_dims(input)?;
    let &[k, k2, wc, f] = weights.shape() else {
        return Err(Error::InvalidShape {
            shape: weights.shape().to_vec(),
            reason: "conv weights must be k x k x in x out".into(),
        });
    };
    if k != k2 || !(k == 1 || k == 3) {
        return Err(Error::InvalidShape {
            shape: weights.shape().to_vec(),
            reason: "conv kernels must be 1x1 or 3x3".into(),
        });
    }
    if wc != c {
        return Err(Error::ShapeMismatch {
            expected: vec![k, k, c, f],
            actual: weights.shape().to_vec(),
        });
    }
    bias.expect_shape(&[f])?;
    let mut out = vec![T::zero(); h * w * f];
    conv_same_forward(
        input.data(),
        h,
        w,
        c,
        weights.data(),
        bias.data(),
        k,
        f,
        &mut out,
    );
    Tensor::new(vec![h, w, f], out)
}

/// Returns the pooled tensor and, per output cell, the flat input offset of its maximum.
pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (h, w, c) = image_dims(input)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidShape {
            shape: input.shape().to_vec(),
            reason: "2x2 max pooling needs even height and width".into(),
        });
    }
    let n = (h / 2) * (w / 2) * c;
    let mut out = vec![T::zero(); n];
    let mut argmax = vec![0; n];
    maxpool2_forward(input.data(), h, w, c, &mut out, &mut argmax);
    Ok((Tensor::new(vec![h / 2, w / 2, c], out)?, argmax))
}

pub fn avgpool_global<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, _, c) = image_dims(input)?;
    let mut out = vec![T::zero(); c];
    avgpool_global_forward(input.data(), c, &mut out);
    Tensor::new(vec![c], out)
}
