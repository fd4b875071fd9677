//! Forward and backward kernels for every layer kind.
//!
//! Convolution is cross-correlation (no kernel flip) with zero padding,
//! lowered to a batch-wide im2col plus one matrix product. All parallel
//! paths keep a fixed per-element accumulation order, so results are
//! bit-identical across thread counts; see `tensor::matmul_into`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Tensor};

/// max(0, x) elementwise.
pub fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// d_out where x > 0, zero elsewhere (subgradient 0 at the kink).
pub fn relu_backward(x: &Tensor, d_out: &Tensor) -> Result<Tensor> {
    if x.shape() != d_out.shape() {
        return Err(Error::ShapeMismatch(format!(
            "relu backward: x {:?} vs d_out {:?}",
            x.shape(),
            d_out.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&xv, &dv)| if xv > 0.0 { dv } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

fn conv_output_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::ShapeMismatch(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    if (padded - kernel) % stride != 0 {
        return Err(Error::ShapeMismatch(format!(
            "non-integral output dim: ({input} + 2*{padding} - {kernel}) / {stride}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

struct ConvDims {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

fn conv_dims(
    x: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvDims> {
    if x.rank() != 4 || weight.rank() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "conv2d needs [N,C,H,W] input and [Co,Ci,kh,kw] weight, got {:?} and {:?}",
            x.shape(),
            weight.shape()
        )));
    }
    let (n, c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (c_out, wc_in, kh, kw) =
        (weight.shape()[0], weight.shape()[1], weight.shape()[2], weight.shape()[3]);
    if wc_in != c_in {
        return Err(Error::ShapeMismatch(format!(
            "conv2d channels: input has {c_in}, weight expects {wc_in}"
        )));
    }
    if stride == 0 {
        return Err(Error::ShapeMismatch("conv2d stride must be positive".into()));
    }
    let ho = conv_output_dim(h, kh, stride, padding)?;
    let wo = conv_output_dim(w, kw, stride, padding)?;
    Ok(ConvDims { n, c_in, h, w, c_out, kh, kw, ho, wo })
}

/// Lowers `x [N,C,H,W]` to a `[C*kh*kw, N*Ho*Wo]` patch matrix. Row order is
/// (channel, ky, kx), matching the row-major flattening of the weight.
fn im2col(x: &Tensor, d: &ConvDims, stride: usize, padding: usize) -> Vec<f32> {
    let k_rows = d.c_in * d.kh * d.kw;
    let cols = d.n * d.ho * d.wo;
    let mut out = vec![0.0f32; k_rows * cols];
    let xs = x.data();
    let plane = d.h * d.w;
    out.par_chunks_mut(cols).enumerate().for_each(|(row, dst)| {
        let ci = row / (d.kh * d.kw);
        let ky = row / d.kw % d.kh;
        let kx = row % d.kw;
        for nn in 0..d.n {
            let src_plane = &xs[(nn * d.c_in + ci) * plane..(nn * d.c_in + ci + 1) * plane];
            let base = nn * d.ho * d.wo;
            for oy in 0..d.ho {
                let sy = (oy * stride + ky) as isize - padding as isize;
                if sy < 0 || sy >= d.h as isize {
                    continue; // stays zero
                }
                let src_row = &src_plane[sy as usize * d.w..(sy as usize + 1) * d.w];
                let dst_row = &mut dst[base + oy * d.wo..base + (oy + 1) * d.wo];
                for (ox, slot) in dst_row.iter_mut().enumerate() {
                    let sx = (ox * stride + kx) as isize - padding as isize;
                    if sx >= 0 && sx < d.w as isize {
                        *slot = src_row[sx as usize];
                    }
                }
            }
        }
    });
    out
}

/// Accumulates the `[C*kh*kw, N*Ho*Wo]` patch-gradient matrix back into
/// input layout, the exact adjoint of `im2col`. Parallel over samples;
/// each sample's scatter runs serially in row order.
fn col2im(d_cols: &[f32], d: &ConvDims, stride: usize, padding: usize) -> Vec<f32> {
    let cols = d.n * d.ho * d.wo;
    let plane = d.h * d.w;
    let mut dx = vec![0.0f32; d.n * d.c_in * plane];
    dx.par_chunks_mut(d.c_in * plane).enumerate().for_each(|(nn, dx_sample)| {
        for ci in 0..d.c_in {
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let row = (ci * d.kh + ky) * d.kw + kx;
                    let src = &d_cols[row * cols + nn * d.ho * d.wo..];
                    for oy in 0..d.ho {
                        let sy = (oy * stride + ky) as isize - padding as isize;
                        if sy < 0 || sy >= d.h as isize {
                            continue;
                        }
                        for ox in 0..d.wo {
                            let sx = (ox * stride + kx) as isize - padding as isize;
                            if sx >= 0 && sx < d.w as isize {
                                dx_sample[(ci * d.h + sy as usize) * d.w + sx as usize] +=
                                    src[oy * d.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    });
    dx
}

/// Cross-correlation of `x [N,Ci,H,W]` with `weight [Co,Ci,kh,kw]` plus a
/// per-channel bias. Zero padding; output `[N,Co,Ho,Wo]`.
pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let d = conv_dims(x, weight, stride, padding)?;
    if bias.shape() != [d.c_out] {
        return Err(Error::ShapeMismatch(format!(
            "conv2d bias shape {:?}, expected [{}]",
            bias.shape(),
            d.c_out
        )));
    }
    let k_rows = d.c_in * d.kh * d.kw;
    let cols = d.n * d.ho * d.wo;
    let patch = im2col(x, &d, stride, padding);
    let mut out_mat = vec![0.0f32; d.c_out * cols];
    matmul_into(weight.data(), &patch, d.c_out, k_rows, cols, &mut out_mat);

    let plane_out = d.ho * d.wo;
    let mut out = vec![0.0f32; d.n * d.c_out * plane_out];
    out.par_chunks_mut(plane_out).enumerate().for_each(|(i, dst)| {
        let nn = i / d.c_out;
        let co = i % d.c_out;
        let b = bias.data()[co];
        let src = &out_mat[co * cols + nn * plane_out..co * cols + (nn + 1) * plane_out];
        for (o, &v) in dst.iter_mut().zip(src) {
            *o = v + b;
        }
    });
    Tensor::from_vec(&[d.n, d.c_out, d.ho, d.wo], out)
}

/// Gradients of `conv2d_forward` for the same definition. `d_x` is skipped
/// when `compute_dx` is false (first layer, or everything below is frozen).
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    d_out: &Tensor,
    stride: usize,
    padding: usize,
    compute_dx: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let d = conv_dims(x, weight, stride, padding)?;
    if d_out.shape() != [d.n, d.c_out, d.ho, d.wo] {
        return Err(Error::ShapeMismatch(format!(
            "conv2d backward: d_out {:?}, expected {:?}",
            d_out.shape(),
            [d.n, d.c_out, d.ho, d.wo]
        )));
    }
    let k_rows = d.c_in * d.kh * d.kw;
    let cols = d.n * d.ho * d.wo;
    let plane_out = d.ho * d.wo;

    // regroup d_out [N,Co,Ho,Wo] as [Co, N*Ho*Wo]
    let mut d_mat = vec![0.0f32; d.c_out * cols];
    d_mat.par_chunks_mut(cols).enumerate().for_each(|(co, dst)| {
        for nn in 0..d.n {
            let src = &d_out.data()[(nn * d.c_out + co) * plane_out..(nn * d.c_out + co + 1) * plane_out];
            dst[nn * plane_out..(nn + 1) * plane_out].copy_from_slice(src);
        }
    });

    let patch = im2col(x, &d, stride, padding);
    let mut d_weight = vec![0.0f32; d.c_out * k_rows];
    matmul_bt_into(&d_mat, &patch, d.c_out, cols, k_rows, &mut d_weight);

    let mut d_bias = vec![0.0f32; d.c_out];
    for (co, db) in d_bias.iter_mut().enumerate() {
        let mut acc = 0.0f32;
        for &v in &d_mat[co * cols..(co + 1) * cols] {
            acc += v;
        }
        *db = acc;
    }

    let d_x = if compute_dx {
        let mut d_cols = vec![0.0f32; k_rows * cols];
        matmul_at_into(weight.data(), &d_mat, d.c_out, k_rows, cols, &mut d_cols);
        let dx = col2im(&d_cols, &d, stride, padding);
        Some(Tensor::from_vec(&[d.n, d.c_in, d.h, d.w], dx)?)
    } else {
        None
    };
    Ok((
        d_x,
        Tensor::from_vec(weight.shape(), d_weight)?,
        Tensor::from_vec(&[d.c_out], d_bias)?,
    ))
}

/// Per-window maximum over `[N,C,H,W]`; also returns the flat input index
/// of each winner (first occurrence in row-major window scan on ties),
/// which the backward pass routes gradients through.
pub fn maxpool2d_forward(x: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Vec<u32>)> {
    if x.rank() != 4 {
        return Err(Error::ShapeMismatch(format!("maxpool needs [N,C,H,W], got {:?}", x.shape())));
    }
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if window == 0 || stride == 0 {
        return Err(Error::ShapeMismatch("maxpool window and stride must be positive".into()));
    }
    if window > h || window > w {
        return Err(Error::ShapeMismatch(format!(
            "maxpool window {window} larger than input {h}x{w}"
        )));
    }
    let ho = conv_output_dim(h, window, stride, 0)?;
    let wo = conv_output_dim(w, window, stride, 0)?;
    let plane_in = h * w;
    let plane_out = ho * wo;
    let mut out = vec![0.0f32; n * c * plane_out];
    let mut idx = vec![0u32; n * c * plane_out];
    let xs = x.data();
    out.par_chunks_mut(plane_out)
        .zip(idx.par_chunks_mut(plane_out))
        .enumerate()
        .for_each(|(p, (out_plane, idx_plane))| {
            let base = p * plane_in;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_at = 0usize;
                    for ky in 0..window {
                        let sy = oy * stride + ky;
                        for kx in 0..window {
                            let sx = ox * stride + kx;
                            let at = base + sy * w + sx;
                            let v = xs[at];
                            if v > best {
                                best = v;
                                best_at = at;
                            }
                        }
                    }
                    out_plane[oy * wo + ox] = best;
                    idx_plane[oy * wo + ox] = best_at as u32;
                }
            }
        });
    Ok((Tensor::from_vec(&[n, c, ho, wo], out)?, idx))
}

/// Routes each output gradient to its stored argmax position.
pub fn maxpool2d_backward(x_shape: &[usize], indices: &[u32], d_out: &Tensor) -> Result<Tensor> {
    if indices.len() != d_out.len() {
        return Err(Error::ShapeMismatch(format!(
            "maxpool backward: {} indices vs {} gradients",
            indices.len(),
            d_out.len()
        )));
    }
    let mut dx = Tensor::zeros(x_shape)?;
    let buf = dx.data_mut();
    for (&at, &g) in indices.iter().zip(d_out.data()) {
        buf[at as usize] += g;
    }
    Ok(dx)
}

/// `out = x * w + b` with `x [N,F]`, `w [F,M]`, `b [M]`.
pub fn fc_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 || w.rank() != 2 || b.rank() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "fc needs x [N,F], w [F,M], b [M]; got {:?}, {:?}, {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let (wf, m) = (w.shape()[0], w.shape()[1]);
    if f != wf || b.shape()[0] != m {
        return Err(Error::ShapeMismatch(format!(
            "fc shapes do not conform: x {:?}, w {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0f32; n * m];
    matmul_into(x.data(), w.data(), n, f, m, &mut out);
    for row in out.chunks_exact_mut(m) {
        for (o, &bv) in row.iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
    Tensor::from_vec(&[n, m], out)
}

/// `d_w = x^T d_out`, `d_b = column sums of d_out`, `d_x = d_out w^T`.
pub fn fc_backward(
    x: &Tensor,
    w: &Tensor,
    d_out: &Tensor,
    compute_dx: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let (wf, m) = (w.shape()[0], w.shape()[1]);
    if f != wf || d_out.shape() != [n, m] {
        return Err(Error::ShapeMismatch(format!(
            "fc backward shapes: x {:?}, w {:?}, d_out {:?}",
            x.shape(),
            w.shape(),
            d_out.shape()
        )));
    }
    let mut d_w = vec![0.0f32; f * m];
    matmul_at_into(x.data(), d_out.data(), n, f, m, &mut d_w);
    let mut d_b = vec![0.0f32; m];
    for row in d_out.data().chunks_exact(m) {
        for (db, &v) in d_b.iter_mut().zip(row) {
            *db += v;
        }
    }
    let d_x = if compute_dx {
        let mut dx = vec![0.0f32; n * f];
        matmul_bt_into(d_out.data(), w.data(), n, m, f, &mut dx);
        Some(Tensor::from_vec(&[n, f], dx)?)
    } else {
        None
    };
    Ok((d_x, Tensor::from_vec(&[f, m], d_w)?, Tensor::from_vec(&[m], d_b)?))
}

/// `[N,C,H,W] -> [N, C*H*W]`; pure reshape.
pub fn flatten_forward(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::ShapeMismatch(format!("flatten needs rank 4, got {:?}", x.shape())));
    }
    let n = x.shape()[0];
    let f = x.len() / n;
    x.clone().reshape(&[n, f])
}

/// Inverse reshape of `flatten_forward`.
pub fn flatten_backward(x_shape: &[usize], d_out: &Tensor) -> Result<Tensor> {
    d_out.clone().reshape(x_shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeKind {
    /// Elementwise sum of two same-shape branches (skip connection).
    ResidualAdd,
    /// Channel concatenation of two branches with equal N, H, W.
    Concat,
}

/// Combines the sequential input `a` with an earlier layer's output `b`.
pub fn merge_forward(kind: MergeKind, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    match kind {
        MergeKind::ResidualAdd => a.add(b).map_err(|_| {
            Error::ShapeMismatch(format!(
                "residual-add needs equal shapes, got {:?} and {:?}",
                a.shape(),
                b.shape()
            ))
        }),
        MergeKind::Concat => {
            if a.rank() != 4 || b.rank() != 4 {
                return Err(Error::ShapeMismatch("concat needs rank-4 inputs".into()));
            }
            let (n, ca, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2], a.shape()[3]);
            let (nb, cb, hb, wb) = (b.shape()[0], b.shape()[1], b.shape()[2], b.shape()[3]);
            if n != nb || h != hb || w != wb {
                return Err(Error::ShapeMismatch(format!(
                    "concat needs equal N,H,W: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            let plane = h * w;
            let mut out = Vec::with_capacity(n * (ca + cb) * plane);
            for nn in 0..n {
                out.extend_from_slice(&a.data()[nn * ca * plane..(nn + 1) * ca * plane]);
                out.extend_from_slice(&b.data()[nn * cb * plane..(nn + 1) * cb * plane]);
            }
            Tensor::from_vec(&[n, ca + cb, h, w], out)
        }
    }
}

/// Splits the merged gradient back into (sequential branch, skip branch).
pub fn merge_backward(kind: MergeKind, a_shape: &[usize], d_out: &Tensor) -> Result<(Tensor, Tensor)> {
    match kind {
        MergeKind::ResidualAdd => Ok((d_out.clone(), d_out.clone())),
        MergeKind::Concat => {
            let (n, ca, h, w) = (a_shape[0], a_shape[1], a_shape[2], a_shape[3]);
            let c_total = d_out.shape()[1];
            let cb = c_total - ca;
            let plane = h * w;
            let mut da = Vec::with_capacity(n * ca * plane);
            let mut db = Vec::with_capacity(n * cb * plane);
            for nn in 0..n {
                let base = nn * c_total * plane;
                da.extend_from_slice(&d_out.data()[base..base + ca * plane]);
                db.extend_from_slice(&d_out.data()[base + ca * plane..base + c_total * plane]);
            }
            Ok((
                Tensor::from_vec(&[n, ca, h, w], da)?,
                Tensor::from_vec(&[n, cb, h, w], db)?,
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn relu_forward_and_backward() {
        let x = Tensor::from_vec(&[3], vec![-3.0, 0.0, 5.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 5.0]);
        let x = Tensor::from_vec(&[2], vec![-1.0, 2.0]).unwrap();
        let d = Tensor::from_vec(&[2], vec![10.0, 10.0]).unwrap();
        assert_eq!(relu_backward(&x, &d).unwrap().data(), &[0.0, 10.0]);
    }

    #[test]
    fn relu_preserves_nonnegatives() {
        let mut rng = Rng::new(1);
        let x = random_tensor(&mut rng, &[64]);
        let y = relu_forward(&x);
        for (&xv, &yv) in x.data().iter().zip(y.data()) {
            assert!(yv >= 0.0);
            if xv >= 0.0 {
                assert_eq!(xv, yv);
            }
        }
    }

    #[test]
    fn conv_all_ones_sums_window() {
        let x = Tensor::new(&[1, 1, 3, 3], 1.0).unwrap();
        let w = Tensor::new(&[1, 1, 3, 3], 1.0).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let out = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data(), &[9.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = Rng::new(2);
        let x = random_tensor(&mut rng, &[1, 1, 5, 5]);
        let mut w = Tensor::zeros(&[1, 1, 3, 3]).unwrap();
        w.data_mut()[4] = 1.0; // center delta
        let b = Tensor::zeros(&[1]).unwrap();
        let out = conv2d_forward(&x, &w, &b, 1, 1).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    /// Direct six-loop cross-correlation, the independent reference.
    fn conv_oracle(
        x: &Tensor,
        w: &Tensor,
        b: &Tensor,
        stride: usize,
        padding: usize,
    ) -> Vec<f32> {
        let (n, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (co, _, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let ho = (h + 2 * padding - kh) / stride + 1;
        let wo = (wd + 2 * padding - kw) / stride + 1;
        let mut out = vec![0.0f32; n * co * ho * wo];
        for nn in 0..n {
            for oc in 0..co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b.data()[oc];
                        for ic in 0..ci {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let sy = (oy * stride + ky) as isize - padding as isize;
                                    let sx = (ox * stride + kx) as isize - padding as isize;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                        continue;
                                    }
                                    acc += x.at(&[nn, ic, sy as usize, sx as usize])
                                        * w.at(&[oc, ic, ky, kx]);
                                }
                            }
                        }
                        out[((nn * co + oc) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_oracle() {
        let mut rng = Rng::new(3);
        let x = random_tensor(&mut rng, &[1, 2, 5, 5]);
        let w = random_tensor(&mut rng, &[3, 2, 3, 3]);
        let b = random_tensor(&mut rng, &[3]);
        for (stride, padding) in [(1, 0), (1, 1), (2, 1)] {
            let got = conv2d_forward(&x, &w, &b, stride, padding).unwrap();
            let want = conv_oracle(&x, &w, &b, stride, padding);
            for (g, e) in got.data().iter().zip(&want) {
                assert!((g - e).abs() <= 1e-5, "stride {stride} pad {padding}: {g} vs {e}");
            }
        }
    }

    #[test]
    fn conv_rejects_non_integral_output() {
        let x = Tensor::zeros(&[1, 1, 5, 5]).unwrap();
        let w = Tensor::zeros(&[1, 1, 2, 2]).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        assert!(matches!(conv2d_forward(&x, &w, &b, 2, 0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn maxpool_forward_and_routing() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, idx) = maxpool2d_forward(&x, 2, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
        let d = Tensor::from_vec(&[1, 1, 1, 1], vec![7.0]).unwrap();
        let dx = maxpool2d_backward(&[1, 1, 2, 2], &idx, &d).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 7.0]);
    }

    #[test]
    fn maxpool_tie_takes_first_in_scan() {
        let x = Tensor::new(&[1, 1, 2, 2], 5.0).unwrap();
        let (_, idx) = maxpool2d_forward(&x, 2, 2).unwrap();
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn maxpool_matches_window_scan_oracle() {
        let mut rng = Rng::new(4);
        let x = random_tensor(&mut rng, &[2, 3, 8, 8]);
        let (out, _) = maxpool2d_forward(&x, 2, 2).unwrap();
        for nn in 0..2 {
            for c in 0..3 {
                for oy in 0..4 {
                    for ox in 0..4 {
                        let mut best = f32::NEG_INFINITY;
                        for ky in 0..2 {
                            for kx in 0..2 {
                                best = best.max(x.at(&[nn, c, oy * 2 + ky, ox * 2 + kx]));
                            }
                        }
                        assert_eq!(out.at(&[nn, c, oy, ox]), best);
                    }
                }
            }
        }
    }

    #[test]
    fn maxpool_rejects_oversized_window() {
        let x = Tensor::zeros(&[1, 1, 2, 2]).unwrap();
        assert!(matches!(maxpool2d_forward(&x, 3, 1), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn fc_basis_vector_picks_row() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = Tensor::zeros(&[2]).unwrap();
        let out = fc_forward(&x, &w, &b).unwrap();
        assert_eq!(out.data(), &[2.0, 3.0]);
    }

    #[test]
    fn fc_zero_input_broadcasts_bias() {
        let x = Tensor::zeros(&[3, 4]).unwrap();
        let w = Tensor::zeros(&[4, 2]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.5, -1.5]).unwrap();
        let out = fc_forward(&x, &w, &b).unwrap();
        for row in out.data().chunks_exact(2) {
            assert_eq!(row, &[0.5, -1.5]);
        }
    }

    #[test]
    fn fc_matches_loop_oracle() {
        let mut rng = Rng::new(5);
        let x = random_tensor(&mut rng, &[3, 4]);
        let w = random_tensor(&mut rng, &[4, 2]);
        let b = random_tensor(&mut rng, &[2]);
        let out = fc_forward(&x, &w, &b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = b.data()[j];
                for kk in 0..4 {
                    acc += x.at(&[i, kk]) * w.at(&[kk, j]);
                }
                assert!((out.at(&[i, j]) - acc).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn fc_backward_formulas() {
        let mut rng = Rng::new(6);
        let x = random_tensor(&mut rng, &[3, 4]);
        let w = random_tensor(&mut rng, &[4, 2]);
        let d = random_tensor(&mut rng, &[3, 2]);
        let (dx, dw, db) = fc_backward(&x, &w, &d, true).unwrap();
        let dx = dx.unwrap();
        for i in 0..4 {
            for j in 0..2 {
                let mut acc = 0.0;
                for nn in 0..3 {
                    acc += x.at(&[nn, i]) * d.at(&[nn, j]);
                }
                assert!((dw.at(&[i, j]) - acc).abs() <= 1e-5);
            }
        }
        for j in 0..2 {
            let acc: f32 = (0..3).map(|nn| d.at(&[nn, j])).sum();
            assert!((db.at(&[j]) - acc).abs() <= 1e-5);
        }
        for nn in 0..3 {
            for i in 0..4 {
                let mut acc = 0.0;
                for j in 0..2 {
                    acc += d.at(&[nn, j]) * w.at(&[i, j]);
                }
                assert!((dx.at(&[nn, i]) - acc).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let mut rng = Rng::new(7);
        let x = random_tensor(&mut rng, &[1, 2, 2, 2]);
        let flat = flatten_forward(&x).unwrap();
        assert_eq!(flat.shape(), &[1, 8]);
        assert_eq!(flat.data(), x.data());
        let back = flatten_backward(&[1, 2, 2, 2], &flat).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn flatten_rejects_wrong_rank() {
        let x = Tensor::zeros(&[2, 3]).unwrap();
        assert!(matches!(flatten_forward(&x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn residual_add_identity_and_backward() {
        let mut rng = Rng::new(8);
        let x = random_tensor(&mut rng, &[1, 2, 3, 3]);
        let zeros = Tensor::zeros(&[1, 2, 3, 3]).unwrap();
        assert_eq!(merge_forward(MergeKind::ResidualAdd, &x, &zeros).unwrap(), x);
        let g = random_tensor(&mut rng, &[1, 2, 3, 3]);
        let (da, db) = merge_backward(MergeKind::ResidualAdd, x.shape(), &g).unwrap();
        assert_eq!(da, g);
        assert_eq!(db, g);
    }

    #[test]
    fn concat_shapes_and_split() {
        let mut rng = Rng::new(9);
        let a = random_tensor(&mut rng, &[1, 2, 4, 4]);
        let b = random_tensor(&mut rng, &[1, 3, 4, 4]);
        let merged = merge_forward(MergeKind::Concat, &a, &b).unwrap();
        assert_eq!(merged.shape(), &[1, 5, 4, 4]);
        let (da, db) = merge_backward(MergeKind::Concat, a.shape(), &merged).unwrap();
        assert_eq!(da, a);
        assert_eq!(db, b);
    }

    #[test]
    fn concat_rejects_mismatched_spatial() {
        let a = Tensor::zeros(&[1, 2, 4, 4]).unwrap();
        let b = Tensor::zeros(&[1, 2, 3, 4]).unwrap();
        assert!(matches!(merge_forward(MergeKind::Concat, &a, &b), Err(Error::ShapeMismatch(_))));
    }
}
