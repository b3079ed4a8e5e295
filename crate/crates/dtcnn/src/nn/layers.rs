//! Layer forward and backward passes.
//!
//! Every function operates on a single sample; batching is the caller's
//! concern. Spatial tensors are `h x w x c` row-major, vectors are rank-1.
//! Convolution uses the cross-correlation convention (no kernel flip) and is
//! evaluated through im2col so the bulk of the work is one matmul.

use crate::nn::gemm::{matmul, matmul_a_bt, matmul_at_b};
use crate::tensor::{Rng, Scalar, Tensor};
use crate::{Error, Result};

/// Output extent of a strided window sweep: floor((h + 2p - k)/s) + 1.
pub fn window_out_extent(extent: usize, kernel: usize, pad: usize, stride: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Shape("kernel and stride must be >= 1".into()));
    }
    let padded = extent + 2 * pad;
    if kernel > padded {
        return Err(Error::Shape(format!(
            "window {} exceeds padded extent {}",
            kernel, padded
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn expect_rank3<T: Scalar>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!("{} wants rank 3, got {:?}", what, s)));
    }
    Ok((s[0], s[1], s[2]))
}

// ---------------------------------------------------------------------------
// convolution

/// Unroll padded sliding windows into a `(oh*ow) x (k*k*c)` patch matrix.
/// Patch columns are ordered (ky, kx, channel) row-major; out-of-bounds
/// positions contribute zero.
fn im2col<T: Scalar>(
    x: &Tensor<T>,
    kernel: usize,
    pad: usize,
    stride: usize,
) -> Result<(Vec<T>, usize, usize)> {
    let (h, w, c) = expect_rank3(x, "conv input")?;
    let oh = window_out_extent(h, kernel, pad, stride)?;
    let ow = window_out_extent(w, kernel, pad, stride)?;
    let cols = kernel * kernel * c;
    let mut patches = vec![T::zero(); oh * ow * cols];
    let src = x.data();
    for oy in 0..oh {
        for ox in 0..ow {
            let row = (oy * ow + ox) * cols;
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let s = (iy as usize * w + ix as usize) * c;
                    let d = row + (ky * kernel + kx) * c;
                    patches[d..d + c].copy_from_slice(&src[s..s + c]);
                }
            }
        }
    }
    Ok((patches, oh, ow))
}

/// Scatter-add a patch-matrix gradient back onto the input image.
fn col2im<T: Scalar>(
    d_patches: &[T],
    h: usize,
    w: usize,
    c: usize,
    kernel: usize,
    pad: usize,
    stride: usize,
    oh: usize,
    ow: usize,
) -> Tensor<T> {
    let cols = kernel * kernel * c;
    let mut dx = Tensor::zeros(&[h, w, c]).expect("valid shape");
    let dst = dx.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            let row = (oy * ow + ox) * cols;
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let s = row + (ky * kernel + kx) * c;
                    let d = (iy as usize * w + ix as usize) * c;
                    for ch in 0..c {
                        dst[d + ch] = dst[d + ch] + d_patches[s + ch];
                    }
                }
            }
        }
    }
    dx
}

/// Cross-correlation of `x [h,w,in_c]` with `weights [k,k,in_c,out_c]` plus a
/// per-channel bias, producing `[h',w',out_c]`.
pub fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    pad: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    let (_, _, in_c) = expect_rank3(x, "conv input")?;
    let ws = weights.shape();
    if ws.len() != 4 || ws[0] != ws[1] || ws[2] != in_c {
        return Err(Error::Shape(format!(
            "conv weights want [k,k,{},out], got {:?}",
            in_c, ws
        )));
    }
    let (kernel, out_c) = (ws[0], ws[3]);
    if bias.shape() != [out_c] {
        return Err(Error::Shape("conv bias length must equal out channels".into()));
    }
    let (patches, oh, ow) = im2col(x, kernel, pad, stride)?;
    let cols = kernel * kernel * in_c;
    let mut out = Tensor::zeros(&[oh, ow, out_c])?;
    matmul(&patches, weights.data(), out.data_mut(), oh * ow, cols, out_c);
    let od = out.data_mut();
    let bd = bias.data();
    for p in 0..oh * ow {
        for oc in 0..out_c {
            od[p * out_c + oc] = od[p * out_c + oc] + bd[oc];
        }
    }
    Ok(out)
}

/// Gradients of `conv_forward` with respect to input, weights and bias.
pub fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    dy: &Tensor<T>,
    pad: usize,
    stride: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (h, w, in_c) = expect_rank3(x, "conv input")?;
    let ws = weights.shape();
    let (kernel, out_c) = (ws[0], ws[3]);
    let (patches, oh, ow) = im2col(x, kernel, pad, stride)?;
    if dy.shape() != [oh, ow, out_c] {
        return Err(Error::Shape(format!(
            "conv upstream gradient wants [{},{},{}], got {:?}",
            oh,
            ow,
            out_c,
            dy.shape()
        )));
    }
    let cols = kernel * kernel * in_c;
    let p = oh * ow;

    let mut dw = Tensor::zeros(&[kernel, kernel, in_c, out_c])?;
    matmul_at_b(&patches, dy.data(), dw.data_mut(), p, cols, out_c);

    let mut db = Tensor::zeros(&[out_c])?;
    let dbd = db.data_mut();
    for row in 0..p {
        for oc in 0..out_c {
            dbd[oc] = dbd[oc] + dy.data()[row * out_c + oc];
        }
    }

    let mut d_patches = vec![T::zero(); p * cols];
    matmul_a_bt(dy.data(), weights.data(), &mut d_patches, p, out_c, cols);
    let dx = col2im(&d_patches, h, w, in_c, kernel, pad, stride, oh, ow);
    Ok((dx, dw, db))
}

// ---------------------------------------------------------------------------
// relu

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    out
}

/// dx = dy where x > 0, else 0 (the gradient at exactly 0 is 0).
pub fn relu_backward<T: Scalar>(dy: &Tensor<T>, x: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
        if xv <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// max pooling

/// Max pooling with no padding. Returns the pooled map and the flat input
/// index that won each window (ties go to the first element in row-major
/// order), which the backward pass routes gradients through.
pub fn maxpool_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (h, w, c) = expect_rank3(x, "pool input")?;
    let oh = window_out_extent(h, kernel, 0, stride)?;
    let ow = window_out_extent(w, kernel, 0, stride)?;
    let mut out = Tensor::zeros(&[oh, ow, c])?;
    let mut argmax = vec![0usize; oh * ow * c];
    let src = x.data();
    let dst = out.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_idx = (oy * stride * w + ox * stride) * c + ch;
                let mut best = src[best_idx];
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let idx = ((oy * stride + ky) * w + (ox * stride + kx)) * c + ch;
                        if src[idx] > best {
                            best = src[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                dst[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool_backward<T: Scalar>(
    dy: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if dy.len() != argmax.len() {
        return Err(Error::Shape("pool gradient / argmax length mismatch".into()));
    }
    let mut dx = Tensor::zeros(input_shape)?;
    let dst = dx.data_mut();
    for (&g, &idx) in dy.data().iter().zip(argmax) {
        dst[idx] = dst[idx] + g;
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// local response normalization

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrnParams {
    pub n_local: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> LrnParams {
        LrnParams {
            n_local: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 1.0,
        }
    }
}

/// Across-channel normalization:
/// y_c = x_c / (k + (alpha/n_local) * Σ_{c' in window} x_{c'}²)^beta,
/// the window being n_local channels centered at c, truncated at the edges.
/// Returns the output and the per-element scale (the parenthesized base),
/// which the backward pass reuses.
pub fn lrn_forward<T: Scalar>(x: &Tensor<T>, p: &LrnParams) -> Result<(Tensor<T>, Tensor<T>)> {
    if p.n_local % 2 == 0 {
        return Err(Error::Constraint("lrn window size must be odd".into()));
    }
    let (h, w, c) = expect_rank3(x, "lrn input")?;
    let half = p.n_local / 2;
    let coeff = T::from_f64(p.alpha / p.n_local as f64);
    let k = T::from_f64(p.k);
    let beta = T::from_f64(p.beta);
    let mut out = Tensor::zeros(&[h, w, c])?;
    let mut scale = Tensor::zeros(&[h, w, c])?;
    let src = x.data();
    let od = out.data_mut();
    let sd = scale.data_mut();
    for pos in 0..h * w {
        let base = pos * c;
        for ch in 0..c {
            let lo = ch.saturating_sub(half);
            let hi = (ch + half).min(c - 1);
            let mut sq = T::zero();
            for j in lo..=hi {
                let v = src[base + j];
                sq = sq + v * v;
            }
            let s = k + coeff * sq;
            sd[base + ch] = s;
            od[base + ch] = src[base + ch] * s.powf(-beta);
        }
    }
    Ok((out, scale))
}

pub fn lrn_backward<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    scale: &Tensor<T>,
    p: &LrnParams,
) -> Result<Tensor<T>> {
    let (h, w, c) = expect_rank3(x, "lrn input")?;
    if dy.shape() != x.shape() || scale.shape() != x.shape() {
        return Err(Error::Shape("lrn gradient shape mismatch".into()));
    }
    let half = p.n_local / 2;
    let coeff = T::from_f64(p.alpha / p.n_local as f64);
    let beta = T::from_f64(p.beta);
    let two = T::from_f64(2.0);
    let mut dx = Tensor::zeros(&[h, w, c])?;
    let (xd, gd, sd) = (x.data(), dy.data(), scale.data());
    let dd = dx.data_mut();
    for pos in 0..h * w {
        let base = pos * c;
        for i in 0..c {
            // Direct term plus the normalization pool's feedback from every
            // output whose window contains channel i (symmetric window).
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(c - 1);
            let mut pooled = T::zero();
            for ch in lo..=hi {
                pooled = pooled
                    + gd[base + ch] * xd[base + ch] * sd[base + ch].powf(-beta - T::one());
            }
            dd[base + i] = gd[base + i] * sd[base + i].powf(-beta)
                - two * coeff * beta * xd[base + i] * pooled;
        }
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// energy (spatial mean per feature map)

/// e[k] = mean over all spatial positions of feature map k.
pub fn energy_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = expect_rank3(x, "energy input")?;
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let src = x.data();
    let mut out = Tensor::zeros(&[c])?;
    let od = out.data_mut();
    for (ch, o) in od.iter_mut().enumerate() {
        let mut acc = T::zero();
        for pos in 0..h * w {
            acc = acc + src[pos * c + ch];
        }
        *o = acc * inv;
    }
    Ok(out)
}

pub fn energy_backward<T: Scalar>(dy: &Tensor<T>, input_shape: &[usize]) -> Result<Tensor<T>> {
    if input_shape.len() != 3 || dy.shape() != [input_shape[2]] {
        return Err(Error::Shape("energy gradient shape mismatch".into()));
    }
    let (h, w, c) = (input_shape[0], input_shape[1], input_shape[2]);
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut dx = Tensor::zeros(input_shape)?;
    let dd = dx.data_mut();
    for pos in 0..h * w {
        for ch in 0..c {
            dd[pos * c + ch] = dy.data()[ch] * inv;
        }
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// fully connected

/// y = Wᵀ x + b with W stored `[in, out]`.
pub fn fc_forward<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let ws = weights.shape();
    if ws.len() != 2 {
        return Err(Error::Shape("fc weights want rank 2 [in, out]".into()));
    }
    let (n_in, n_out) = (ws[0], ws[1]);
    if x.len() != n_in {
        return Err(Error::Shape(format!(
            "fc input length {} does not match weight rows {}",
            x.len(),
            n_in
        )));
    }
    if bias.shape() != [n_out] {
        return Err(Error::Shape("fc bias length must equal out features".into()));
    }
    let mut out = Tensor::zeros(&[n_out])?;
    matmul(x.data(), weights.data(), out.data_mut(), 1, n_in, n_out);
    for (o, &b) in out.data_mut().iter_mut().zip(bias.data()) {
        *o = *o + b;
    }
    Ok(out)
}

pub fn fc_backward<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let ws = weights.shape();
    let (n_in, n_out) = (ws[0], ws[1]);
    if dy.len() != n_out || x.len() != n_in {
        return Err(Error::Shape("fc gradient shape mismatch".into()));
    }
    let mut dx = Tensor::zeros(&[n_in])?;
    matmul_a_bt(dy.data(), weights.data(), dx.data_mut(), 1, n_out, n_in);
    let mut dw = Tensor::zeros(&[n_in, n_out])?;
    matmul_at_b(x.data(), dy.data(), dw.data_mut(), 1, n_in, n_out);
    let db = dy.clone();
    Ok((dx, dw, db))
}

// ---------------------------------------------------------------------------
// dropout

/// Inverted dropout: in training, zero each element with probability `rate`
/// and scale survivors by 1/(1-rate); at inference it is the identity. The
/// returned mask holds the multiplier applied to each element.
pub fn dropout_forward<T: Scalar>(
    x: &Tensor<T>,
    rate: f64,
    rng: &mut Rng,
    train: bool,
) -> Result<(Tensor<T>, Vec<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {} outside [0, 1)", rate)));
    }
    if !train || rate == 0.0 {
        return Ok((x.clone(), vec![T::one(); x.len()]));
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mut out = x.clone();
    let mut mask = vec![T::zero(); x.len()];
    for (v, m) in out.data_mut().iter_mut().zip(mask.iter_mut()) {
        if rng.next_f64() < rate {
            *v = T::zero();
        } else {
            *v = *v * keep;
            *m = keep;
        }
    }
    Ok((out, mask))
}

pub fn dropout_backward<T: Scalar>(dy: &Tensor<T>, mask: &[T]) -> Result<Tensor<T>> {
    if dy.len() != mask.len() {
        return Err(Error::Shape("dropout mask length mismatch".into()));
    }
    let mut dx = dy.clone();
    for (d, &m) in dx.data_mut().iter_mut().zip(mask) {
        *d = *d * m;
    }
    Ok(dx)
}

// ---------------------------------------------------------------------------
// crop

/// Window plan for the crop layer: offsets plus an optional horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropPlan {
    pub oy: usize,
    pub ox: usize,
    pub mirror: bool,
}

/// Training plan: uniformly random offsets and a fair mirror coin. The rng
/// draw order (oy, ox, mirror) is fixed for reproducibility.
pub fn random_crop_plan(rng: &mut Rng, h: usize, w: usize, side: usize, mirror: bool) -> CropPlan {
    let oy = rng.next_below(h - side + 1);
    let ox = rng.next_below(w - side + 1);
    let flip = mirror && rng.next_below(2) == 1;
    CropPlan { oy, ox, mirror: flip }
}

/// Inference plan: the center window, no mirroring.
pub fn center_crop_plan(h: usize, w: usize, side: usize) -> CropPlan {
    CropPlan {
        oy: (h - side) / 2,
        ox: (w - side) / 2,
        mirror: false,
    }
}

pub fn crop_forward<T: Scalar>(x: &Tensor<T>, side: usize, plan: CropPlan) -> Result<Tensor<T>> {
    let (h, w, c) = expect_rank3(x, "crop input")?;
    if side > h || side > w || plan.oy + side > h || plan.ox + side > w {
        return Err(Error::Shape(format!(
            "crop window {}x{} at ({},{}) exceeds {}x{} input",
            side, side, plan.oy, plan.ox, h, w
        )));
    }
    let mut out = Tensor::zeros(&[side, side, c])?;
    let src = x.data();
    let dst = out.data_mut();
    for y in 0..side {
        for xo in 0..side {
            let sx = if plan.mirror {
                plan.ox + side - 1 - xo
            } else {
                plan.ox + xo
            };
            let s = ((plan.oy + y) * w + sx) * c;
            let d = (y * side + xo) * c;
            dst[d..d + c].copy_from_slice(&src[s..s + c]);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// softmax loss

/// Multinomial logistic loss over softmax probabilities, computed with
/// max-subtraction. Returns (loss, dlogits) where dlogits = softmax - onehot.
pub fn softmax_loss<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    let n = logits.len();
    if logits.rank() != 1 || n == 0 {
        return Err(Error::Shape("softmax loss wants a rank-1 logit vector".into()));
    }
    if label >= n {
        return Err(Error::Constraint(format!(
            "label {} out of range for {} classes",
            label, n
        )));
    }
    let ld = logits.data();
    let mut max = ld[0];
    for &v in ld {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    let mut dl = Tensor::zeros(&[n])?;
    for (d, &v) in dl.data_mut().iter_mut().zip(ld) {
        let e = (v - max).exp();
        *d = e;
        sum = sum + e;
    }
    let loss = sum.ln() - (ld[label] - max);
    for d in dl.data_mut() {
        *d = *d / sum;
    }
    let dd = dl.data_mut();
    dd[label] = dd[label] - T::one();
    Ok((loss, dl))
}
