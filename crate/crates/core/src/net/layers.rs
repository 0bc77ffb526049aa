//! Layer kernels with explicit backward passes.
//!
//! Every `*_backward` takes the upstream gradient `dy` (same shape as the
//! forward output) and returns gradients with respect to the layer inputs and
//! parameters.

use rand::Rng;

use super::real::{matmul, Real};
use super::tensor::Tensor;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Convolution (stride 1, square kernel, zero padding)
// ---------------------------------------------------------------------------

/// Unrolls one `(c, h, w)` image into a `(c*k*k) x (oh*ow)` matrix.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, col: &mut [T]) {
    let (oh, ow) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let mut row = 0;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                // Valid output columns: 0 <= ox + kx - pad < w.
                let ox_lo = pad.saturating_sub(kx);
                let ox_hi = (w + pad).saturating_sub(kx).min(ow);
                for oy in 0..oh {
                    let out = &mut dst[oy * ow..(oy + 1) * ow];
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize || ox_lo >= ox_hi {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    out[..ox_lo].fill(T::zero());
                    let ix_lo = ox_lo + kx - pad;
                    out[ox_lo..ox_hi].copy_from_slice(&src[ix_lo..ix_lo + (ox_hi - ox_lo)]);
                    out[ox_hi..].fill(T::zero());
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into the image gradient.
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, dx: &mut [T]) {
    let (oh, ow) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let mut row = 0;
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let src = &col[row * oh * ow..(row + 1) * oh * ow];
                let ox_lo = pad.saturating_sub(kx);
                let ox_hi = (w + pad).saturating_sub(kx).min(ow);
                if ox_lo < ox_hi {
                    for oy in 0..oh {
                        let iy = oy as isize + ky as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let ix_lo = ox_lo + kx - pad;
                        let dst = &mut plane[iy as usize * w + ix_lo..][..ox_hi - ox_lo];
                        for (d, &s) in dst.iter_mut().zip(&src[oy * ow + ox_lo..oy * ow + ox_hi]) {
                            *d += s;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn conv_dims<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    out_c: usize,
    k: usize,
    pad: usize,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = x.dims4()?;
    if k == 0 || h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::Shape(format!(
            "kernel {k} with padding {pad} does not fit a {h}x{w} input"
        )));
    }
    if weight.len() != out_c * c * k * k {
        return Err(Error::Shape(format!(
            "conv weight has {} values, expected {out_c}x{c}x{k}x{k}",
            weight.len()
        )));
    }
    if bias.len() != out_c {
        return Err(Error::Shape(format!(
            "conv bias has {} values, expected {out_c}",
            bias.len()
        )));
    }
    Ok((n, c, h, w, h + 2 * pad + 1 - k, w + 2 * pad + 1 - k))
}

/// Cross-correlation of `x (n, c, h, w)` with `weight (out_c, c, k, k)`.
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    out_c: usize,
    k: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w, oh, ow) = conv_dims(x, weight, bias, out_c, k, pad)?;
    let ckk = c * k * k;
    let area = oh * ow;
    let mut col = vec![T::zero(); ckk * area];
    let mut y = Tensor::zeros(&[n, out_c, oh, ow]);
    for b in 0..n {
        im2col(&x.data()[b * c * h * w..(b + 1) * c * h * w], c, h, w, k, pad, &mut col);
        let out = &mut y.data_mut()[b * out_c * area..(b + 1) * out_c * area];
        for (o, chunk) in out.chunks_mut(area).enumerate() {
            chunk.fill(bias[o]);
        }
        matmul(out_c, ckk, area, T::one(), weight, false, &col, false, T::one(), out);
    }
    Ok(y)
}

/// Gradients of a convolution.
pub struct ConvGrads<T> {
    /// `None` when the input gradient was not requested.
    pub dx: Option<Tensor<T>>,
    pub dweight: Vec<T>,
    pub dbias: Vec<T>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    out_c: usize,
    k: usize,
    pad: usize,
    dy: &Tensor<T>,
    need_dx: bool,
) -> Result<ConvGrads<T>> {
    let zeros = vec![T::zero(); out_c];
    let (n, c, h, w, oh, ow) = conv_dims(x, weight, &zeros, out_c, k, pad)?;
    if dy.shape() != [n, out_c, oh, ow] {
        return Err(Error::Shape(format!(
            "conv upstream gradient has shape {:?}, expected {:?}",
            dy.shape(),
            [n, out_c, oh, ow]
        )));
    }
    let ckk = c * k * k;
    let area = oh * ow;
    let mut col = vec![T::zero(); ckk * area];
    let mut dcol = vec![T::zero(); if need_dx { ckk * area } else { 0 }];
    let mut dweight = vec![T::zero(); out_c * ckk];
    let mut dbias = vec![T::zero(); out_c];
    let mut dx = need_dx.then(|| Tensor::zeros(&[n, c, h, w]));
    for b in 0..n {
        let g = &dy.data()[b * out_c * area..(b + 1) * out_c * area];
        for (o, chunk) in g.chunks(area).enumerate() {
            dbias[o] += chunk.iter().copied().sum::<T>();
        }
        im2col(&x.data()[b * c * h * w..(b + 1) * c * h * w], c, h, w, k, pad, &mut col);
        matmul(out_c, area, ckk, T::one(), g, false, &col, true, T::one(), &mut dweight);
        if let Some(dx) = dx.as_mut() {
            matmul(ckk, out_c, area, T::one(), weight, true, g, false, T::zero(), &mut dcol);
            col2im(&dcol, c, h, w, k, pad, &mut dx.data_mut()[b * c * h * w..(b + 1) * c * h * w]);
        }
    }
    Ok(ConvGrads {
        dx,
        dweight,
        dbias,
    })
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// `(batch, channels, spatial)` view of a rank-2 or rank-4 tensor.
fn bn_dims<T: Real>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match x.shape() {
        &[n, c] => Ok((n, c, 1)),
        &[n, c, h, w] => Ok((n, c, h * w)),
        s => Err(Error::Shape(format!(
            "batch norm expects rank 2 or 4, got shape {s:?}"
        ))),
    }
}

fn check_channels<T>(what: &str, v: &[T], c: usize) -> Result<()> {
    if v.len() == c {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "batch norm {what} has {} entries for {c} channels",
            v.len()
        )))
    }
}

/// Per-channel parameters and running statistics of a batch-norm layer.
pub struct BnParams<'a, T> {
    pub gamma: &'a [T],
    pub beta: &'a [T],
    pub eps: T,
}

/// Saved forward state for [`batchnorm_backward`].
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
}

/// Train mode: standardizes each channel over (batch, spatial) using the batch
/// statistics, then applies `gamma * xhat + beta`. The running statistics move
/// toward the batch statistics: `r <- (1 - momentum) r + momentum * stat`.
pub fn batchnorm_forward_train<T: Real>(
    x: &Tensor<T>,
    p: &BnParams<'_, T>,
    running_mean: &mut [T],
    running_var: &mut [T],
    momentum: T,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let (n, c, s) = bn_dims(x)?;
    if n < 2 {
        return Err(Error::DegenerateBatch(n));
    }
    for (what, v) in [("gamma", p.gamma), ("beta", p.beta)] {
        check_channels(what, v, c)?;
    }
    check_channels("running mean", running_mean, c)?;
    check_channels("running variance", running_var, c)?;
    let count = T::from_usize(n * s).expect("count fits");
    let xd = x.data();
    let mut y = Tensor::zeros(x.shape());
    let mut xhat = Tensor::zeros(x.shape());
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let planes = (0..n).map(|b| &xd[(b * c + ch) * s..(b * c + ch + 1) * s]);
        let mean = planes.clone().flatten().copied().sum::<T>() / count;
        let var = planes
            .flatten()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<T>()
            / count;
        let istd = T::one() / (var + p.eps).sqrt();
        inv_std[ch] = istd;
        for b in 0..n {
            let range = (b * c + ch) * s..(b * c + ch + 1) * s;
            let xs = &xd[range.clone()];
            let hs = &mut xhat.data_mut()[range.clone()];
            for (h, &v) in hs.iter_mut().zip(xs) {
                *h = (v - mean) * istd;
            }
            let hs = &xhat.data()[range.clone()];
            for (o, &h) in y.data_mut()[range].iter_mut().zip(hs) {
                *o = p.gamma[ch] * h + p.beta[ch];
            }
        }
        running_mean[ch] = (T::one() - momentum) * running_mean[ch] + momentum * mean;
        running_var[ch] = (T::one() - momentum) * running_var[ch] + momentum * var;
    }
    Ok((y, BnCache { xhat, inv_std }))
}

/// Eval mode: normalizes with the running statistics.
pub fn batchnorm_forward_eval<T: Real>(
    x: &Tensor<T>,
    p: &BnParams<'_, T>,
    running_mean: &[T],
    running_var: &[T],
) -> Result<Tensor<T>> {
    let (n, c, s) = bn_dims(x)?;
    for (what, v) in [
        ("gamma", p.gamma),
        ("beta", p.beta),
        ("running mean", running_mean),
        ("running variance", running_var),
    ] {
        check_channels(what, v, c)?;
    }
    let mut y = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let scale = p.gamma[ch] / (running_var[ch] + p.eps).sqrt();
            let shift = p.beta[ch] - running_mean[ch] * scale;
            for v in &mut y.data_mut()[(b * c + ch) * s..(b * c + ch + 1) * s] {
                *v = *v * scale + shift;
            }
        }
    }
    Ok(y)
}

/// Train-mode gradient through the batch mean and variance:
/// `dx = istd / M * (M dxhat - Σ dxhat - xhat Σ(dxhat xhat))`.
pub fn batchnorm_backward<T: Real>(
    cache: &BnCache<T>,
    gamma: &[T],
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    if dy.shape() != cache.xhat.shape() {
        return Err(Error::Shape(format!(
            "batch norm upstream gradient has shape {:?}, expected {:?}",
            dy.shape(),
            cache.xhat.shape()
        )));
    }
    let (n, c, s) = bn_dims(dy)?;
    check_channels("gamma", gamma, c)?;
    let m = T::from_usize(n * s).expect("count fits");
    let (xh, g) = (cache.xhat.data(), dy.data());
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * s..(b * c + ch + 1) * s;
            for (&gv, &hv) in g[r.clone()].iter().zip(&xh[r]) {
                dbeta[ch] += gv;
                dgamma[ch] += gv * hv;
            }
        }
    }
    let mut dx = Tensor::zeros(dy.shape());
    for b in 0..n {
        for ch in 0..c {
            // Σ dxhat = gamma Σ dy and Σ dxhat xhat = gamma dgamma.
            let sum_d = gamma[ch] * dbeta[ch];
            let sum_dh = gamma[ch] * dgamma[ch];
            let k = cache.inv_std[ch] / m;
            let r = (b * c + ch) * s..(b * c + ch + 1) * s;
            for ((o, &gv), &hv) in dx.data_mut()[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xh[r]) {
                *o = k * (m * gamma[ch] * gv - sum_d - hv * sum_dh);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

// ---------------------------------------------------------------------------
// ReLU and 2x2 max pooling
// ---------------------------------------------------------------------------

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Uses the forward output: the gradient passes where `y > 0` (so it is 0 at
/// the kink).
pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape() != dy.shape() {
        return Err(Error::Shape("relu gradient shape mismatch".into()));
    }
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(y.shape(), data)
}

/// 2x2 stride-2 max pooling. Also returns, per output element, the window
/// offset (0..4 in row-major order) of the first maximum.
pub fn maxpool2x2_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u8>)> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "2x2 pooling needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let mut arg = vec![0u8; n * c * oh * ow];
    let xd = x.data();
    for p in 0..n * c {
        let plane = &xd[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            let r0 = &plane[2 * oy * w..(2 * oy + 1) * w];
            let r1 = &plane[(2 * oy + 1) * w..(2 * oy + 2) * w];
            for ox in 0..ow {
                let cand = [r0[2 * ox], r0[2 * ox + 1], r1[2 * ox], r1[2 * ox + 1]];
                let mut best = 0;
                for i in 1..4 {
                    if cand[i] > cand[best] {
                        best = i;
                    }
                }
                let o = (p * oh + oy) * ow + ox;
                y.data_mut()[o] = cand[best];
                arg[o] = best as u8;
            }
        }
    }
    Ok((y, arg))
}

/// Routes each output gradient to the recorded argmax position.
pub fn maxpool2x2_backward<T: Real>(
    input_shape: &[usize],
    argmax: &[u8],
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, c, oh, ow) = dy.dims4()?;
    if input_shape != [n, c, 2 * oh, 2 * ow] || argmax.len() != dy.len() {
        return Err(Error::Shape("pooling gradient shape mismatch".into()));
    }
    let w = 2 * ow;
    let mut dx = Tensor::zeros(input_shape);
    let plane = 4 * oh * ow;
    for p in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (p * oh + oy) * ow + ox;
                let a = argmax[o] as usize;
                let (iy, ix) = (2 * oy + a / 2, 2 * ox + a % 2);
                dx.data_mut()[p * plane + iy * w + ix] += dy.data()[o];
            }
        }
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// Dense, dropout, loss
// ---------------------------------------------------------------------------

/// `y = x W^T + b` with `x (batch, in)` and `W (out, in)`.
pub fn dense_forward<T: Real>(x: &Tensor<T>, weight: &[T], bias: &[T]) -> Result<Tensor<T>> {
    let (n, din) = x.dims2()?;
    let dout = bias.len();
    if weight.len() != dout * din {
        return Err(Error::Shape(format!(
            "dense weight has {} values, expected {dout}x{din}",
            weight.len()
        )));
    }
    let mut y = Tensor::zeros(&[n, dout]);
    for row in y.data_mut().chunks_mut(dout) {
        row.copy_from_slice(bias);
    }
    matmul(n, din, dout, T::one(), x.data(), false, weight, true, T::one(), y.data_mut());
    Ok(y)
}

/// Returns `(dx, dweight, dbias)`.
pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (n, din) = x.dims2()?;
    let (n2, dout) = dy.dims2()?;
    if n != n2 || weight.len() != dout * din {
        return Err(Error::Shape("dense gradient shape mismatch".into()));
    }
    let mut dw = vec![T::zero(); dout * din];
    matmul(dout, n, din, T::one(), dy.data(), true, x.data(), false, T::zero(), &mut dw);
    let mut db = vec![T::zero(); dout];
    for row in dy.data().chunks(dout) {
        for (d, &g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    let mut dx = Tensor::zeros(&[n, din]);
    matmul(n, dout, din, T::one(), dy.data(), false, weight, false, T::zero(), dx.data_mut());
    Ok((dx, dw, db))
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask<T: Real>(len: usize, p: f64, rng: &mut impl Rng) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect())
}

/// Elementwise product with a mask; serves as both the train-mode forward and
/// the backward pass.
pub fn apply_mask<T: Real>(x: &Tensor<T>, mask: &[T]) -> Result<Tensor<T>> {
    if mask.len() != x.len() {
        return Err(Error::Shape("dropout mask length mismatch".into()));
    }
    Tensor::from_vec(
        x.shape(),
        x.data().iter().zip(mask).map(|(&v, &m)| v * m).collect(),
    )
}

/// Train mode draws a fresh mask; eval mode is the identity.
pub fn dropout_forward<T: Real>(
    x: &Tensor<T>,
    p: f64,
    train: bool,
    rng: &mut impl Rng,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !train {
        return Ok((x.clone(), None));
    }
    let mask = dropout_mask(x.len(), p, rng)?;
    Ok((apply_mask(x, &mask)?, Some(mask)))
}

/// Mean squared error over every element, with its gradient
/// `2 (pred - target) / count`.
pub fn loss_mse<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let count = T::from_usize(pred.len()).expect("count fits");
    let two = T::one() + T::one();
    let mut loss = T::zero();
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d * d;
            two * d / count
        })
        .collect();
    Ok((loss / count, Tensor::from_vec(pred.shape(), grad)?))
}
