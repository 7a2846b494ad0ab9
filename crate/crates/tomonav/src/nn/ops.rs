//! Tensor operations and their gradients. Forward passes parallelize
//! over disjoint output planes; every per-plane accumulation is
//! sequential, so results are bitwise deterministic for any thread
//! count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Kernel extents the architecture allows.
pub const ALLOWED_KERNELS: [usize; 2] = [1, 3];

fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::InvalidShape(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// First and last output column whose input column index lands inside
/// [0, w): icol = ocol*stride + k - padding.
#[inline]
fn valid_out_range(out_n: usize, in_n: usize, stride: usize, k: usize, padding: usize) -> (usize, usize) {
    let lo = if k >= padding { 0 } else { (padding - k).div_ceil(stride) };
    let hi_in = in_n + padding - k; // exclusive bound on ocol*stride
    let hi = if hi_in == 0 { 0 } else { ((hi_in - 1) / stride + 1).min(out_n) };
    (lo.min(hi), hi)
}

/// 2D cross-correlation with zero padding.
///
/// `input` is [n, ci, h, w], `weights` [co, ci, kh, kw], `bias` [co].
pub fn conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let [n, ci, h, w] = input.shape();
    let [co, wci, kh, kw] = weights.shape();
    if stride == 0 {
        return Err(Error::InvalidShape("stride must be >= 1".into()));
    }
    if wci != ci {
        return Err(Error::InvalidShape(format!(
            "conv channel mismatch: input {ci}, weights expect {wci}"
        )));
    }
    if bias.len() != co {
        return Err(Error::InvalidShape(format!("bias length {} != {co}", bias.len())));
    }
    if !ALLOWED_KERNELS.contains(&kh) || !ALLOWED_KERNELS.contains(&kw) {
        return Err(Error::InvalidShape(format!("conv kernel must be 1 or 3 per side, got {kh}x{kw}")));
    }
    let oh = conv_out_extent(h, kh, stride, padding)?;
    let ow = conv_out_extent(w, kw, stride, padding)?;

    let mut out = Tensor::zeros(&[n, co, oh, ow]);
    let in_data = input.data();
    let w_data = weights.data();
    let b_data = bias.data();
    let plane_work = ci * kh * kw * oh * ow;
    let run_plane = |plane_idx: usize, out_plane: &mut [f64]| {
        let ni = plane_idx / co;
        let oc = plane_idx % co;
        out_plane.fill(b_data[oc]);
        for ic in 0..ci {
            let in_plane = &in_data[(ni * ci + ic) * h * w..(ni * ci + ic + 1) * h * w];
            for kr in 0..kh {
                for kc in 0..kw {
                    let wt = w_data[((oc * ci + ic) * kh + kr) * kw + kc];
                    if wt == 0.0 {
                        continue;
                    }
                    let (clo, chi) = valid_out_range(ow, w, stride, kc, padding);
                    if clo >= chi {
                        continue;
                    }
                    for orow in 0..oh {
                        let ir = (orow * stride + kr) as isize - padding as isize;
                        if ir < 0 || ir >= h as isize {
                            continue;
                        }
                        let in_row = &in_plane[ir as usize * w..(ir as usize + 1) * w];
                        let out_row = &mut out_plane[orow * ow..(orow + 1) * ow];
                        if stride == 1 {
                            let shift = clo + kc - padding;
                            for (o, &v) in out_row[clo..chi]
                                .iter_mut()
                                .zip(&in_row[shift..shift + (chi - clo)])
                            {
                                *o += wt * v;
                            }
                        } else {
                            for ocol in clo..chi {
                                let icq = ocol * stride + kc - padding;
                                out_row[ocol] += wt * in_row[icq];
                            }
                        }
                    }
                }
            }
        }
    };
    // Tiny planes are cheaper serially than as rayon tasks.
    if plane_work * n * co > 400_000 {
        out.data_mut()
            .par_chunks_mut(oh * ow)
            .enumerate()
            .for_each(|(plane_idx, out_plane)| run_plane(plane_idx, out_plane));
    } else {
        for (plane_idx, out_plane) in out.data_mut().chunks_mut(oh * ow).enumerate() {
            run_plane(plane_idx, out_plane);
        }
    }
    Ok(out)
}

/// Gradients of `conv2d` with respect to input, weights and bias.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [n, ci, h, w] = input.shape();
    let [co, _, kh, kw] = weights.shape();
    let [gn, gc, oh, ow] = grad_out.shape();
    if gn != n || gc != co {
        return Err(Error::InvalidShape("grad_out shape mismatch in conv backward".into()));
    }
    let go = grad_out.data();
    let in_data = input.data();
    let w_data = weights.data();

    let mut grad_b = Tensor::zeros(&[co]);
    for oc in 0..co {
        let mut acc = 0.0;
        for ni in 0..n {
            acc += grad_out.plane(ni, oc).iter().sum::<f64>();
        }
        grad_b.data_mut()[oc] = acc;
    }

    let mut grad_w = Tensor::zeros(&[co, ci, kh, kw]);
    grad_w
        .data_mut()
        .par_chunks_mut(ci * kh * kw)
        .enumerate()
        .for_each(|(oc, gw_oc)| {
            for ic in 0..ci {
                for kr in 0..kh {
                    for kc in 0..kw {
                        let (clo, chi) = valid_out_range(ow, w, stride, kc, padding);
                        let mut acc = 0.0;
                        for ni in 0..n {
                            let in_plane = &in_data[(ni * ci + ic) * h * w..(ni * ci + ic + 1) * h * w];
                            let go_plane = &go[(ni * co + oc) * oh * ow..(ni * co + oc + 1) * oh * ow];
                            for orow in 0..oh {
                                let ir = (orow * stride + kr) as isize - padding as isize;
                                if ir < 0 || ir >= h as isize || clo >= chi {
                                    continue;
                                }
                                let in_row = &in_plane[ir as usize * w..(ir as usize + 1) * w];
                                let go_row = &go_plane[orow * ow..(orow + 1) * ow];
                                if stride == 1 {
                                    let shift = clo + kc - padding;
                                    for (g, &v) in go_row[clo..chi]
                                        .iter()
                                        .zip(&in_row[shift..shift + (chi - clo)])
                                    {
                                        acc += g * v;
                                    }
                                } else {
                                    for ocol in clo..chi {
                                        acc += go_row[ocol] * in_row[ocol * stride + kc - padding];
                                    }
                                }
                            }
                        }
                        gw_oc[(ic * kh + kr) * kw + kc] = acc;
                    }
                }
            }
        });

    let mut grad_in = Tensor::zeros(&[n, ci, h, w]);
    grad_in
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(plane_idx, gi_plane)| {
            let ni = plane_idx / ci;
            let ic = plane_idx % ci;
            for oc in 0..co {
                let go_plane = &go[(ni * co + oc) * oh * ow..(ni * co + oc + 1) * oh * ow];
                for kr in 0..kh {
                    for kc in 0..kw {
                        let wt = w_data[((oc * ci + ic) * kh + kr) * kw + kc];
                        if wt == 0.0 {
                            continue;
                        }
                        let (clo, chi) = valid_out_range(ow, w, stride, kc, padding);
                        if clo >= chi {
                            continue;
                        }
                        for orow in 0..oh {
                            let ir = (orow * stride + kr) as isize - padding as isize;
                            if ir < 0 || ir >= h as isize {
                                continue;
                            }
                            let gi_row = &mut gi_plane[ir as usize * w..(ir as usize + 1) * w];
                            let go_row = &go_plane[orow * ow..(orow + 1) * ow];
                            if stride == 1 {
                                let shift = clo + kc - padding;
                                for (gi, &g) in gi_row[shift..shift + (chi - clo)]
                                    .iter_mut()
                                    .zip(&go_row[clo..chi])
                                {
                                    *gi += wt * g;
                                }
                            } else {
                                for ocol in clo..chi {
                                    gi_row[ocol * stride + kc - padding] += wt * go_row[ocol];
                                }
                            }
                        }
                    }
                }
            }
        });

    Ok((grad_in, grad_w, grad_b))
}

fn pool_out_extent(input: usize, window: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if window == 0 || stride == 0 || window > padded {
        return Err(Error::InvalidShape(format!(
            "pool window {window} / stride {stride} invalid for input {input} (+2*{padding})"
        )));
    }
    Ok((padded - window) / stride + 1)
}

/// Max pooling over square windows; padding cells never win.
pub fn maxpool2d(input: &Tensor, window: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    let oh = pool_out_extent(h, window, stride, padding)?;
    let ow = pool_out_extent(w, window, stride, padding)?;
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let in_data = input.data();
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane_idx, out_plane)| {
            let in_plane = &in_data[plane_idx * h * w..(plane_idx + 1) * h * w];
            for orow in 0..oh {
                for ocol in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for kr in 0..window {
                        let ir = (orow * stride + kr) as isize - padding as isize;
                        if ir < 0 || ir >= h as isize {
                            continue;
                        }
                        for kc in 0..window {
                            let icq = (ocol * stride + kc) as isize - padding as isize;
                            if icq >= 0 && icq < w as isize {
                                best = best.max(in_plane[ir as usize * w + icq as usize]);
                            }
                        }
                    }
                    out_plane[orow * ow + ocol] = best;
                }
            }
        });
    Ok(out)
}

/// Routes each output gradient to the first maximal input cell of its
/// window (ties broken in scan order, deterministically).
pub fn maxpool2d_backward(
    input: &Tensor,
    grad_out: &Tensor,
    window: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    let [_, _, oh, ow] = grad_out.shape();
    let in_data = input.data();
    let go = grad_out.data();
    let mut grad_in = Tensor::zeros(&[n, c, h, w]);
    grad_in
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(plane_idx, gi_plane)| {
            let in_plane = &in_data[plane_idx * h * w..(plane_idx + 1) * h * w];
            let go_plane = &go[plane_idx * oh * ow..(plane_idx + 1) * oh * ow];
            for orow in 0..oh {
                for ocol in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = None;
                    for kr in 0..window {
                        let ir = (orow * stride + kr) as isize - padding as isize;
                        if ir < 0 || ir >= h as isize {
                            continue;
                        }
                        for kc in 0..window {
                            let icq = (ocol * stride + kc) as isize - padding as isize;
                            if icq >= 0 && icq < w as isize {
                                let v = in_plane[ir as usize * w + icq as usize];
                                if v > best {
                                    best = v;
                                    best_at = Some(ir as usize * w + icq as usize);
                                }
                            }
                        }
                    }
                    if let Some(at) = best_at {
                        gi_plane[at] += go_plane[orow * ow + ocol];
                    }
                }
            }
        });
    Ok(grad_in)
}

/// Average pooling; padding cells count as zeros in the window mean.
pub fn avgpool2d(input: &Tensor, window: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    let oh = pool_out_extent(h, window, stride, padding)?;
    let ow = pool_out_extent(w, window, stride, padding)?;
    let inv = 1.0 / (window * window) as f64;
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let in_data = input.data();
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane_idx, out_plane)| {
            let in_plane = &in_data[plane_idx * h * w..(plane_idx + 1) * h * w];
            for orow in 0..oh {
                for ocol in 0..ow {
                    let mut acc = 0.0;
                    for kr in 0..window {
                        let ir = (orow * stride + kr) as isize - padding as isize;
                        if ir < 0 || ir >= h as isize {
                            continue;
                        }
                        for kc in 0..window {
                            let icq = (ocol * stride + kc) as isize - padding as isize;
                            if icq >= 0 && icq < w as isize {
                                acc += in_plane[ir as usize * w + icq as usize];
                            }
                        }
                    }
                    out_plane[orow * ow + ocol] = acc * inv;
                }
            }
        });
    Ok(out)
}

pub fn avgpool2d_backward(
    input_shape: [usize; 4],
    grad_out: &Tensor,
    window: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let [n, c, h, w] = input_shape;
    let [_, _, oh, ow] = grad_out.shape();
    let inv = 1.0 / (window * window) as f64;
    let go = grad_out.data();
    let mut grad_in = Tensor::zeros(&[n, c, h, w]);
    grad_in
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(plane_idx, gi_plane)| {
            let go_plane = &go[plane_idx * oh * ow..(plane_idx + 1) * oh * ow];
            for orow in 0..oh {
                for ocol in 0..ow {
                    let g = go_plane[orow * ow + ocol] * inv;
                    for kr in 0..window {
                        let ir = (orow * stride + kr) as isize - padding as isize;
                        if ir < 0 || ir >= h as isize {
                            continue;
                        }
                        for kc in 0..window {
                            let icq = (ocol * stride + kc) as isize - padding as isize;
                            if icq >= 0 && icq < w as isize {
                                gi_plane[ir as usize * w + icq as usize] += g;
                            }
                        }
                    }
                }
            }
        });
    Ok(grad_in)
}

/// Mean over each (h, w) plane, output [n, c, 1, 1].
pub fn global_avgpool(input: &Tensor) -> Tensor {
    let [n, c, h, w] = input.shape();
    let inv = 1.0 / (h * w) as f64;
    let mut out = Tensor::zeros(&[n, c, 1, 1]);
    for ni in 0..n {
        for ci in 0..c {
            out.data_mut()[ni * c + ci] = input.plane(ni, ci).iter().sum::<f64>() * inv;
        }
    }
    out
}

pub fn global_avgpool_backward(input_shape: [usize; 4], grad_out: &Tensor) -> Tensor {
    let [n, c, h, w] = input_shape;
    let inv = 1.0 / (h * w) as f64;
    let mut grad_in = Tensor::zeros(&[n, c, h, w]);
    for ni in 0..n {
        for ci in 0..c {
            let g = grad_out.at(ni, ci, 0, 0) * inv;
            let hw = h * w;
            let start = (ni * c + ci) * hw;
            for v in &mut grad_in.data_mut()[start..start + hw] {
                *v = g;
            }
        }
    }
    grad_in
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise relu/sigmoid; softmax normalizes over the channel axis
/// for every (n, h, w) site.
pub fn apply_activation(input: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Relu => {
            let mut out = input.clone();
            for v in out.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            out
        }
        Activation::Sigmoid => {
            let mut out = input.clone();
            for v in out.data_mut() {
                *v = sigmoid(*v);
            }
            out
        }
        Activation::Softmax => {
            let [n, c, h, w] = input.shape();
            let mut out = Tensor::zeros(&[n, c, h, w]);
            for ni in 0..n {
                for hi in 0..h {
                    for wi in 0..w {
                        let mut peak = f64::NEG_INFINITY;
                        for ci in 0..c {
                            peak = peak.max(input.at(ni, ci, hi, wi));
                        }
                        let mut total = 0.0;
                        for ci in 0..c {
                            total += (input.at(ni, ci, hi, wi) - peak).exp();
                        }
                        for ci in 0..c {
                            let idx = out.idx(ni, ci, hi, wi);
                            out.data_mut()[idx] = (input.at(ni, ci, hi, wi) - peak).exp() / total;
                        }
                    }
                }
            }
            out
        }
    }
}

pub fn activation_backward(input: &Tensor, grad_out: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Relu => {
            let mut grad = grad_out.clone();
            for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
                if x <= 0.0 {
                    *g = 0.0;
                }
            }
            grad
        }
        Activation::Sigmoid => {
            let mut grad = grad_out.clone();
            for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
                let s = sigmoid(x);
                *g *= s * (1.0 - s);
            }
            grad
        }
        Activation::Softmax => {
            let y = apply_activation(input, Activation::Softmax);
            let [n, c, h, w] = input.shape();
            let mut grad = Tensor::zeros(&[n, c, h, w]);
            for ni in 0..n {
                for hi in 0..h {
                    for wi in 0..w {
                        let mut dot = 0.0;
                        for ci in 0..c {
                            dot += grad_out.at(ni, ci, hi, wi) * y.at(ni, ci, hi, wi);
                        }
                        for ci in 0..c {
                            let idx = grad.idx(ni, ci, hi, wi);
                            grad.data_mut()[idx] =
                                y.at(ni, ci, hi, wi) * (grad_out.at(ni, ci, hi, wi) - dot);
                        }
                    }
                }
            }
            grad
        }
    }
}

/// Channel-axis concatenation in argument order.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidShape("concat needs at least one tensor".into()))?;
    let [n, _, h, w] = first.shape();
    let mut c_total = 0;
    for t in inputs {
        let [tn, tc, th, tw] = t.shape();
        if tn != n || th != h || tw != w {
            return Err(Error::InvalidShape(format!(
                "concat spatial mismatch: {:?} vs {:?}",
                t.shape(),
                first.shape()
            )));
        }
        c_total += tc;
    }
    let mut out = Tensor::zeros(&[n, c_total, h, w]);
    let hw = h * w;
    for ni in 0..n {
        let mut c_off = 0;
        for t in inputs {
            let tc = t.c();
            for ci in 0..tc {
                let dst_start = ((ni * c_total) + c_off + ci) * hw;
                out.data_mut()[dst_start..dst_start + hw].copy_from_slice(t.plane(ni, ci));
            }
            c_off += tc;
        }
    }
    Ok(out)
}

/// Inverse of `concat_channels`: slice a channel range back out.
pub fn slice_channels(input: &Tensor, start: usize, count: usize) -> Tensor {
    let [n, c, h, w] = input.shape();
    debug_assert!(start + count <= c);
    let hw = h * w;
    let mut out = Tensor::zeros(&[n, count, h, w]);
    for ni in 0..n {
        for ci in 0..count {
            let dst = (ni * count + ci) * hw;
            out.data_mut()[dst..dst + hw].copy_from_slice(input.plane(ni, start + ci));
        }
    }
    out
}

/// Fully connected layer over the flattened per-sample features.
/// `weights` is [f_out, f_in], output [n, f_out, 1, 1].
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.shape();
    let f_in = c * h * w;
    let [f_out, wfi, _, _] = weights.shape();
    if wfi != f_in {
        return Err(Error::InvalidShape(format!(
            "dense expects {wfi} inputs, got {f_in} (shape {:?})",
            input.shape()
        )));
    }
    if bias.len() != f_out {
        return Err(Error::InvalidShape("dense bias length mismatch".into()));
    }
    let mut out = Tensor::zeros(&[n, f_out, 1, 1]);
    for ni in 0..n {
        let x = &input.data()[ni * f_in..(ni + 1) * f_in];
        for fo in 0..f_out {
            let row = &weights.data()[fo * f_in..(fo + 1) * f_in];
            let mut acc = bias.data()[fo];
            for (xv, wv) in x.iter().zip(row) {
                acc += xv * wv;
            }
            out.data_mut()[ni * f_out + fo] = acc;
        }
    }
    Ok(out)
}

pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [n, c, h, w] = input.shape();
    let f_in = c * h * w;
    let [f_out, _, _, _] = weights.shape();
    let mut grad_in = Tensor::zeros(&[n, c, h, w]);
    let mut grad_w = Tensor::zeros(&[f_out, f_in]);
    let mut grad_b = Tensor::zeros(&[f_out]);
    for ni in 0..n {
        let x = &input.data()[ni * f_in..(ni + 1) * f_in];
        for fo in 0..f_out {
            let g = grad_out.data()[ni * f_out + fo];
            grad_b.data_mut()[fo] += g;
            let wrow = &weights.data()[fo * f_in..(fo + 1) * f_in];
            let gw_row = &mut grad_w.data_mut()[fo * f_in..(fo + 1) * f_in];
            for i in 0..f_in {
                gw_row[i] += g * x[i];
            }
            let gi = &mut grad_in.data_mut()[ni * f_in..(ni + 1) * f_in];
            for i in 0..f_in {
                gi[i] += g * wrow[i];
            }
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

/// Per-channel batch normalization over (n, h, w) using batch
/// statistics; returns (output, batch_mean, batch_var).
pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let [n, c, h, w] = input.shape();
    let count = (n * h * w) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ci in 0..c {
        let mut acc = 0.0;
        for ni in 0..n {
            acc += input.plane(ni, ci).iter().sum::<f64>();
        }
        mean[ci] = acc / count;
        let mut vacc = 0.0;
        for ni in 0..n {
            for &v in input.plane(ni, ci) {
                vacc += (v - mean[ci]) * (v - mean[ci]);
            }
        }
        var[ci] = vacc / count;
    }
    let mut out = Tensor::zeros(&[n, c, h, w]);
    for ni in 0..n {
        for ci in 0..c {
            let inv_std = 1.0 / (var[ci] + eps).sqrt();
            let g = gamma.data()[ci];
            let b = beta.data()[ci];
            let m = mean[ci];
            let hw = h * w;
            let src = input.plane(ni, ci);
            let start = (ni * c + ci) * hw;
            for (o, &v) in out.data_mut()[start..start + hw].iter_mut().zip(src) {
                *o = g * (v - m) * inv_std + b;
            }
        }
    }
    (out, mean, var)
}

/// Gradients for batch-statistics normalization.
pub fn batchnorm_backward(
    input: &Tensor,
    gamma: &Tensor,
    grad_out: &Tensor,
    eps: f64,
) -> (Tensor, Tensor, Tensor) {
    let [n, c, h, w] = input.shape();
    let count = (n * h * w) as f64;
    let (_, mean, var) = batchnorm_forward(input, gamma, &Tensor::zeros(&[c]), eps);
    let mut grad_in = Tensor::zeros(&[n, c, h, w]);
    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    for ci in 0..c {
        let inv_std = 1.0 / (var[ci] + eps).sqrt();
        let m = mean[ci];
        let g = gamma.data()[ci];
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for ni in 0..n {
            let go = grad_out.plane(ni, ci);
            let x = input.plane(ni, ci);
            for (gv, xv) in go.iter().zip(x) {
                sum_g += gv;
                sum_gx += gv * (xv - m) * inv_std;
            }
        }
        grad_beta.data_mut()[ci] = sum_g;
        grad_gamma.data_mut()[ci] = sum_gx;
        let hw = h * w;
        for ni in 0..n {
            let go = grad_out.plane(ni, ci).to_vec();
            let x = input.plane(ni, ci).to_vec();
            let start = (ni * c + ci) * hw;
            for ((gi, gv), xv) in grad_in.data_mut()[start..start + hw]
                .iter_mut()
                .zip(go.iter())
                .zip(x.iter())
            {
                let xhat = (xv - m) * inv_std;
                *gi = g * inv_std * (gv - sum_g / count - xhat * sum_gx / count);
            }
        }
    }
    (grad_in, grad_gamma, grad_beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let len: usize = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| next()).collect()).unwrap()
    }

    #[test]
    fn conv_1x1_identity() {
        let x = lcg_tensor(&[1, 1, 5, 5], 3);
        let w = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn conv_3x3_average_on_constant() {
        let x = Tensor::new(&[1, 1, 5, 5], vec![0.6; 25]).unwrap();
        let w = Tensor::new(&[1, 1, 3, 3], vec![1.0 / 9.0; 9]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv2d(&x, &w, &b, 1, 1).unwrap();
        // Interior keeps the constant; the zero-padded border does not.
        assert!((y.at(0, 0, 2, 2) - 0.6).abs() < 1e-12);
        assert!((y.at(0, 0, 0, 0) - 0.6 * 4.0 / 9.0).abs() < 1e-12);
    }

    /// Six-nested-loop reference convolution.
    fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
        let [n, ci, h, wid] = x.shape();
        let [co, _, kh, kw] = w.shape();
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wid + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros(&[n, co, oh, ow]);
        for ni in 0..n {
            for oc in 0..co {
                for orow in 0..oh {
                    for ocol in 0..ow {
                        let mut acc = b.data()[oc];
                        for ic in 0..ci {
                            for kr in 0..kh {
                                for kc in 0..kw {
                                    let ir = (orow * stride + kr) as isize - pad as isize;
                                    let icq = (ocol * stride + kc) as isize - pad as isize;
                                    if ir >= 0 && ir < h as isize && icq >= 0 && icq < wid as isize {
                                        acc += x.at(ni, ic, ir as usize, icq as usize)
                                            * w.at(oc, ic, kr, kc);
                                    }
                                }
                            }
                        }
                        let idx = out.idx(ni, oc, orow, ocol);
                        out.data_mut()[idx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_brute_force_oracle() {
        let x = lcg_tensor(&[1, 4, 6, 6], 7);
        let w = lcg_tensor(&[8, 4, 3, 3], 11);
        let b = lcg_tensor(&[8], 13);
        for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
            let y = conv2d(&x, &w, &b, stride, pad).unwrap();
            let o = conv_oracle(&x, &w, &b, stride, pad);
            assert_eq!(y.shape(), o.shape());
            for (a, e) in y.data().iter().zip(o.data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_mismatch_and_big_kernels() {
        let x = lcg_tensor(&[1, 3, 6, 6], 17);
        let w = lcg_tensor(&[2, 4, 3, 3], 19);
        let b = Tensor::zeros(&[2]);
        assert!(conv2d(&x, &w, &b, 1, 1).is_err());
        let w5 = lcg_tensor(&[2, 3, 5, 5], 23);
        assert!(conv2d(&x, &w5, &b, 1, 2).is_err());
    }

    #[test]
    fn maxpool_basics() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = maxpool2d(&x, 2, 2, 0).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let c = Tensor::new(&[1, 1, 4, 4], vec![0.3; 16]).unwrap();
        let yc = maxpool2d(&c, 2, 2, 0).unwrap();
        assert!(yc.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn pools_match_nested_loop_oracle() {
        let x = lcg_tensor(&[2, 3, 6, 6], 29);
        let (window, stride) = (2, 2);
        let ymax = maxpool2d(&x, window, stride, 0).unwrap();
        let yavg = avgpool2d(&x, window, stride, 0).unwrap();
        for ni in 0..2 {
            for ci in 0..3 {
                for oh in 0..3 {
                    for ow in 0..3 {
                        let mut mx = f64::NEG_INFINITY;
                        let mut acc = 0.0;
                        for kr in 0..window {
                            for kc in 0..window {
                                let v = x.at(ni, ci, oh * stride + kr, ow * stride + kc);
                                mx = mx.max(v);
                                acc += v;
                            }
                        }
                        assert_eq!(ymax.at(ni, ci, oh, ow), mx);
                        assert!((yavg.at(ni, ci, oh, ow) - acc / 4.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn activations() {
        let x = Tensor::new(&[1, 3, 1, 1], vec![-1.0, 0.0, 2.0]).unwrap();
        let r = apply_activation(&x, Activation::Relu);
        assert_eq!(r.data(), &[0.0, 0.0, 2.0]);
        let s = apply_activation(&Tensor::new(&[1, 1, 1, 1], vec![0.0]).unwrap(), Activation::Sigmoid);
        assert_eq!(s.data(), &[0.5]);
        let sm = apply_activation(&lcg_tensor(&[2, 7, 1, 1], 31), Activation::Softmax);
        for ni in 0..2 {
            let total: f64 = (0..7).map(|c| sm.at(ni, c, 0, 0)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let a = lcg_tensor(&[1, 2, 4, 4], 37);
        let b = lcg_tensor(&[1, 3, 4, 4], 41);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), [1, 5, 4, 4]);
        assert_eq!(slice_channels(&cat, 0, 2), a);
        assert_eq!(slice_channels(&cat, 2, 3), b);
        let single = concat_channels(&[&a]).unwrap();
        assert_eq!(single, a);
        let bad = lcg_tensor(&[1, 2, 3, 4], 43);
        assert!(concat_channels(&[&a, &bad]).is_err());
    }

    #[test]
    fn dense_small_case() {
        // 2 inputs -> 1 output: y = 1*2 + 2*(-1) + 0.5
        let x = Tensor::new(&[1, 2], vec![2.0, -1.0]).unwrap();
        let w = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(&[1], vec![0.5]).unwrap();
        let y = dense(&x, &w, &b).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_normalizes_batch_stats() {
        let x = lcg_tensor(&[4, 3, 5, 5], 47);
        let gamma = Tensor::new(&[3], vec![1.0; 3]).unwrap();
        let beta = Tensor::zeros(&[3]);
        let (y, _, _) = batchnorm_forward(&x, &gamma, &beta, 1e-5);
        for ci in 0..3 {
            let mut acc = 0.0;
            let mut count = 0.0;
            for ni in 0..4 {
                for &v in y.plane(ni, ci) {
                    acc += v;
                    count += 1.0;
                }
            }
            assert!((acc / count).abs() < 1e-10);
        }
    }
}
