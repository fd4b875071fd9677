//! Finite-difference gradient verification.
//!
//! The analytic path under test is the f32 backward pass. The numeric side
//! evaluates the loss in f64 through an independent plain-loop forward
//! interpreter, so the +/-eps probes are not drowned by f32 rounding. Both
//! sides implement the same layer semantics (cross-correlation, first-wins
//! pooling ties, mean loss).

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{cross_entropy_loss, ActivationShape, LayerKind, Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// f64 activation: flat buffer plus logical shape.
#[derive(Clone)]
enum Act {
    Spatial { data: Vec<f64>, n: usize, c: usize, h: usize, w: usize },
    Flat { data: Vec<f64>, n: usize, f: usize },
}

impl Act {
    fn data(&self) -> &[f64] {
        match self {
            Act::Spatial { data, .. } | Act::Flat { data, .. } => data,
        }
    }
}

type Params64 = BTreeMap<String, Vec<f64>>;

struct RefEvaluator<'a> {
    spec: &'a NetworkSpec,
    shapes: &'a [ActivationShape],
    by_name: BTreeMap<&'a str, usize>,
    weight_shapes: BTreeMap<String, Vec<usize>>,
}

impl<'a> RefEvaluator<'a> {
    fn new(net: &'a Network) -> Self {
        let spec = net.spec();
        let by_name = spec.layers.iter().enumerate().map(|(i, l)| (l.name.as_str(), i)).collect();
        let weight_shapes = net
            .param_names()
            .into_iter()
            .map(|n| {
                let shape = net.param(&n).expect("param").shape().to_vec();
                (n, shape)
            })
            .collect();
        Self { spec, shapes: net.output_shapes(), by_name, weight_shapes }
    }

    fn eval_layer(&self, idx: usize, input: &Act, params: &Params64, lookup: &dyn Fn(usize) -> Act) -> Act {
        let l = &self.spec.layers[idx];
        match &l.kind {
            LayerKind::Conv2d { out_channels, kernel, stride, padding } => {
                let (Act::Spatial { data, n, c, h, w }) = input else { panic!("conv input") };
                let wgt = &params[&format!("{}.weight", l.name)];
                let bias = &params[&format!("{}.bias", l.name)];
                let (k, s, p) = (*kernel, *stride, *padding);
                let ho = (h + 2 * p - k) / s + 1;
                let wo = (w + 2 * p - k) / s + 1;
                let co = *out_channels;
                let mut out = vec![0.0f64; n * co * ho * wo];
                for nn in 0..*n {
                    for oc in 0..co {
                        let out_plane = &mut out[(nn * co + oc) * ho * wo..(nn * co + oc + 1) * ho * wo];
                        out_plane.fill(bias[oc]);
                        for ic in 0..*c {
                            let src_plane = &data[(nn * c + ic) * h * w..(nn * c + ic + 1) * h * w];
                            for ky in 0..k {
                                for kx in 0..k {
                                    let wv = wgt[((oc * c + ic) * k + ky) * k + kx];
                                    if wv == 0.0 {
                                        continue;
                                    }
                                    for oy in 0..ho {
                                        let sy = (oy * s + ky) as isize - p as isize;
                                        if sy < 0 || sy >= *h as isize {
                                            continue;
                                        }
                                        let src_row = &src_plane[sy as usize * w..(sy as usize + 1) * w];
                                        let dst_row = &mut out_plane[oy * wo..(oy + 1) * wo];
                                        if s == 1 {
                                            // sx = ox + kx - p stays in range for this ox window
                                            let ox_lo = p.saturating_sub(kx);
                                            let ox_hi = (w + p - kx).min(wo);
                                            let src_off = ox_lo + kx - p;
                                            for (d, &sv) in dst_row[ox_lo..ox_hi]
                                                .iter_mut()
                                                .zip(&src_row[src_off..src_off + (ox_hi - ox_lo)])
                                            {
                                                *d += wv * sv;
                                            }
                                        } else {
                                            for (ox, d) in dst_row.iter_mut().enumerate() {
                                                let sx = (ox * s + kx) as isize - p as isize;
                                                if sx >= 0 && sx < *w as isize {
                                                    *d += wv * src_row[sx as usize];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Act::Spatial { data: out, n: *n, c: co, h: ho, w: wo }
            }
            LayerKind::MaxPool2d { window, stride } => {
                let (Act::Spatial { data, n, c, h, w }) = input else { panic!("pool input") };
                let (k, s) = (*window, *stride);
                let ho = (h - k) / s + 1;
                let wo = (w - k) / s + 1;
                let mut out = vec![0.0f64; n * c * ho * wo];
                for plane in 0..n * c {
                    let src = &data[plane * h * w..(plane + 1) * h * w];
                    let dst = &mut out[plane * ho * wo..(plane + 1) * ho * wo];
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut best = f64::NEG_INFINITY;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let v = src[(oy * s + ky) * w + (ox * s + kx)];
                                    if v > best {
                                        best = v;
                                    }
                                }
                            }
                            dst[oy * wo + ox] = best;
                        }
                    }
                }
                Act::Spatial { data: out, n: *n, c: *c, h: ho, w: wo }
            }
            LayerKind::Relu => match input {
                Act::Spatial { data, n, c, h, w } => Act::Spatial {
                    data: data.iter().map(|&v| v.max(0.0)).collect(),
                    n: *n,
                    c: *c,
                    h: *h,
                    w: *w,
                },
                Act::Flat { data, n, f } => Act::Flat {
                    data: data.iter().map(|&v| v.max(0.0)).collect(),
                    n: *n,
                    f: *f,
                },
            },
            LayerKind::Flatten => {
                let (Act::Spatial { data, n, c, h, w }) = input else { panic!("flatten input") };
                Act::Flat { data: data.clone(), n: *n, f: c * h * w }
            }
            LayerKind::FullyConnected { out_features } => {
                let (Act::Flat { data, n, f }) = input else { panic!("fc input") };
                let wgt = &params[&format!("{}.weight", l.name)];
                let bias = &params[&format!("{}.bias", l.name)];
                let m = *out_features;
                let mut out = vec![0.0f64; n * m];
                for nn in 0..*n {
                    let out_row = &mut out[nn * m..(nn + 1) * m];
                    out_row.copy_from_slice(bias);
                    for i in 0..*f {
                        let xv = data[nn * f + i];
                        if xv == 0.0 {
                            continue;
                        }
                        for (o, &wv) in out_row.iter_mut().zip(&wgt[i * m..(i + 1) * m]) {
                            *o += xv * wv;
                        }
                    }
                }
                Act::Flat { data: out, n: *n, f: m }
            }
            LayerKind::ResidualAdd { from } => {
                let src = lookup(self.by_name[from.as_str()]);
                let (Act::Spatial { data, n, c, h, w }) = input else { panic!("merge input") };
                let sum = data.iter().zip(src.data()).map(|(a, b)| a + b).collect();
                Act::Spatial { data: sum, n: *n, c: *c, h: *h, w: *w }
            }
            LayerKind::Concat { from } => {
                let src = lookup(self.by_name[from.as_str()]);
                let (Act::Spatial { data, n, c, h, w }) = input else { panic!("merge input") };
                let (Act::Spatial { data: sdata, c: sc, .. }) = &src else { panic!("merge src") };
                let plane = h * w;
                let mut out = Vec::with_capacity(data.len() + sdata.len());
                for nn in 0..*n {
                    out.extend_from_slice(&data[nn * c * plane..(nn + 1) * c * plane]);
                    out.extend_from_slice(&sdata[nn * sc * plane..(nn + 1) * sc * plane]);
                }
                Act::Spatial { data: out, n: *n, c: c + sc, h: *h, w: *w }
            }
        }
    }

    /// Full forward pass, every layer output retained.
    fn forward_all(&self, batch: &Act, params: &Params64) -> Vec<Act> {
        let mut outs: Vec<Act> = Vec::with_capacity(self.spec.layers.len());
        for i in 0..self.spec.layers.len() {
            let input = if i == 0 { batch } else { &outs[i - 1] };
            let out = {
                let outs_ref = &outs;
                self.eval_layer(i, input, params, &|j| outs_ref[j].clone())
            };
            outs.push(out);
        }
        outs
    }

    /// Loss recomputing only layers `start..`; activations below come from
    /// the unperturbed base pass. Valid because a perturbation in layer
    /// `start` cannot change anything earlier.
    fn loss_from(&self, start: usize, batch: &Act, base: &[Act], params: &Params64, targets: &[usize]) -> f64 {
        let n_layers = self.spec.layers.len();
        let mut local: Vec<Act> = Vec::with_capacity(n_layers - start);
        for i in start..n_layers {
            let input: &Act = if i == start {
                if i == 0 {
                    batch
                } else {
                    &base[i - 1]
                }
            } else {
                &local[i - start - 1]
            };
            let out = {
                let local_ref = &local;
                self.eval_layer(i, input, params, &|j| {
                    if j >= start {
                        local_ref[j - start].clone()
                    } else {
                        base[j].clone()
                    }
                })
            };
            local.push(out);
        }
        let logits = local.last().unwrap_or_else(|| base.last().unwrap());
        mean_ce_f64(logits, targets)
    }
}

fn mean_ce_f64(logits: &Act, targets: &[usize]) -> f64 {
    let Act::Flat { data, n, f } = logits else { panic!("loss needs flat logits") };
    let mut sum = 0.0f64;
    for (nn, &t) in targets.iter().enumerate() {
        let row = &data[nn * f..(nn + 1) * f];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse: f64 = row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
        sum += lse - row[t];
    }
    sum / *n as f64
}

/// Central-difference check of every parameter gradient against the f32
/// backward pass: returns `max |analytic - numeric| / max(|a|,|n|,1e-8)`.
pub fn grad_check(net: &Network, batch: &Tensor, targets: &[usize], eps: f64) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::InvalidRange(format!("eps must be positive, got {eps}")));
    }
    // analytic gradients with every layer trainable
    let mut work = net.clone();
    work.set_freeze(super::Freeze::Count(0))?;
    let (logits, cache) = work.forward(batch)?;
    let (loss, d_logits) = cross_entropy_loss(&logits, targets)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss} in gradient check")));
    }
    work.backward(batch, &cache, &d_logits)?;

    let evaluator = RefEvaluator::new(&work);
    let params64: Params64 = work
        .param_names()
        .into_iter()
        .map(|n| {
            let data = work.param(&n).expect("param").data().iter().map(|&v| v as f64).collect();
            (n, data)
        })
        .collect();
    let (c, h, w) = work.spec().input_shape;
    let batch64 = Act::Spatial {
        data: batch.data().iter().map(|&v| v as f64).collect(),
        n: batch.shape()[0],
        c,
        h,
        w,
    };
    let base = evaluator.forward_all(&batch64, &params64);

    // one probe job per parameter element
    let mut jobs: Vec<(String, usize, usize, f64)> = Vec::new(); // (name, layer idx, element, analytic)
    for name in work.param_names() {
        let layer = name.rsplit_once('.').map(|(l, _)| l).unwrap_or(&name);
        let layer_idx = evaluator.by_name[layer];
        let grad = work.grad(&name).expect("grad");
        for (i, &g) in grad.data().iter().enumerate() {
            jobs.push((name.clone(), layer_idx, i, g as f64));
        }
    }

    let debug = std::env::var("GF_GRADCHECK_DEBUG").is_ok();
    let chunk = jobs.len().div_ceil(64).max(1);
    let results: Vec<(String, usize, f64, f64, f64)> = jobs
        .par_chunks(chunk)
        .flat_map_iter(|chunk_jobs| {
            let mut local_params = params64.clone();
            let mut out = Vec::new();
            for (name, layer_idx, elem, analytic) in chunk_jobs {
                let theta = local_params[name][*elem];
                local_params.get_mut(name).unwrap()[*elem] = theta + eps;
                let up = evaluator.loss_from(*layer_idx, &batch64, &base, &local_params, targets);
                local_params.get_mut(name).unwrap()[*elem] = theta - eps;
                let down = evaluator.loss_from(*layer_idx, &batch64, &base, &local_params, targets);
                local_params.get_mut(name).unwrap()[*elem] = theta;
                let numeric = (up - down) / (2.0 * eps);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                out.push((name.clone(), *elem, *analytic, numeric, err));
            }
            out
        })
        .collect();
    if debug {
        let mut sorted: Vec<_> = results.iter().collect();
        sorted.sort_by(|a, b| b.4.partial_cmp(&a.4).unwrap());
        let over = results.iter().filter(|r| r.4 > 1e-2).count();
        eprintln!("gradcheck: {} probes, {over} over 1e-2", results.len());
        for (name, elem, a, n, e) in sorted.iter().take(15) {
            eprintln!("  {name}[{elem}]: analytic {a:e} numeric {n:e} err {e:e}");
        }
    }
    Ok(results.into_iter().map(|r| r.4).fold(0.0, f64::max))
}
