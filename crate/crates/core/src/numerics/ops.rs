//! Forward kernels and their reverse-mode rules. Every op returns a fresh
//! tensor; inputs are never mutated. An output carries a tape node iff at
//! least one input does.

use std::rc::Rc;
use std::sync::Arc;

use super::autograd::GradNode;
use super::tensor::{Dtype, Result, Tensor, TensorError};

fn dim_err(op: &'static str, details: String) -> TensorError {
    TensorError::Dimension { op, details }
}

fn check_same_dtype(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dtype() != b.dtype() {
        return Err(TensorError::DtypeMismatch {
            op,
            details: format!("{:?} vs {:?}", a.dtype(), b.dtype()),
        });
    }
    Ok(())
}

fn finish(
    op: &'static str,
    shape: Vec<usize>,
    dtype: Dtype,
    data: Vec<f64>,
    node: Option<Rc<GradNode>>,
) -> Result<Tensor> {
    Tensor::from_arc(op, shape, Arc::new(data), dtype, node)
}

fn parents_of(nodes: &[Option<Rc<GradNode>>]) -> Vec<Rc<GradNode>> {
    nodes.iter().flatten().cloned().collect()
}

/// Standard matrix product of a `[M,K]` by a `[K,N]` tensor.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_dtype("matmul", a, b)?;
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(dim_err(
            "matmul",
            format!("incompatible shapes {:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            if av != 0.0 {
                let brow = &bd[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
    }
    let an = a.node().cloned();
    let bn = b.node().cloned();
    let node = if an.is_some() || bn.is_some() {
        let parents = parents_of(&[an.clone(), bn.clone()]);
        let (ad, bd) = (a.data_arc(), b.data_arc());
        Some(GradNode::op(m * n, parents, move |gy| {
            if let Some(an) = &an {
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += gy[i * n + j] * bd[p * n + j];
                        }
                        ga[i * k + p] = acc;
                    }
                }
                an.accumulate(&ga);
            }
            if let Some(bn) = &bn {
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = ad[i * k + p];
                        if av != 0.0 {
                            for j in 0..n {
                                gb[p * n + j] += av * gy[i * n + j];
                            }
                        }
                    }
                }
                bn.accumulate(&gb);
            }
        }))
    } else {
        None
    };
    finish("matmul", vec![m, n], a.dtype(), out, node)
}

/// Numerically stable softmax along `axis` (max-subtracted).
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape().to_vec();
    if axis >= shape.len() || shape[axis] == 0 {
        return Err(dim_err(
            "softmax",
            format!("axis {} invalid or empty for shape {:?}", axis, shape),
        ));
    }
    let len = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let xd = x.data();
    let mut out = vec![0.0; xd.len()];
    for o in 0..outer {
        for q in 0..inner {
            let base = o * len * inner + q;
            let mut maxv = f64::NEG_INFINITY;
            for i in 0..len {
                maxv = maxv.max(xd[base + i * inner]);
            }
            let mut sum = 0.0;
            for i in 0..len {
                let e = (xd[base + i * inner] - maxv).exp();
                out[base + i * inner] = e;
                sum += e;
            }
            for i in 0..len {
                out[base + i * inner] /= sum;
            }
        }
    }
    let out = Arc::new(out);
    let node = x.node().cloned().map(|xn| {
        let y = Arc::clone(&out);
        let numel = xd.len();
        GradNode::op(numel, vec![Rc::clone(&xn)], move |gy| {
            let mut gx = vec![0.0; numel];
            for o in 0..outer {
                for q in 0..inner {
                    let base = o * len * inner + q;
                    let mut dot = 0.0;
                    for i in 0..len {
                        let idx = base + i * inner;
                        dot += gy[idx] * y[idx];
                    }
                    for i in 0..len {
                        let idx = base + i * inner;
                        gx[idx] = y[idx] * (gy[idx] - dot);
                    }
                }
            }
            xn.accumulate(&gx);
        })
    });
    Tensor::from_arc("softmax", shape, out, x.dtype(), node)
}

/// Layer normalization over the last axis with population variance; affine
/// parameters optional (LPE uses the parameter-free form).
pub fn layernorm(
    x: &Tensor,
    eps: f64,
    gamma: Option<&Tensor>,
    beta: Option<&Tensor>,
) -> Result<Tensor> {
    let shape = x.shape().to_vec();
    let c = *shape.last().ok_or_else(|| dim_err("layernorm", "rank-0 input".into()))?;
    if c == 0 || eps <= 0.0 {
        return Err(dim_err("layernorm", format!("channel extent {} / eps {}", c, eps)));
    }
    for (name, p) in [("gamma", gamma), ("beta", beta)] {
        if let Some(p) = p {
            if p.shape() != [c] {
                return Err(dim_err(
                    "layernorm",
                    format!("{} shape {:?}, expected [{}]", name, p.shape(), c),
                ));
            }
            check_same_dtype("layernorm", x, p)?;
        }
    }
    let rows = x.numel() / c;
    let xd = x.data();
    let gd = gamma.map(|g| g.data_arc());
    let bd = beta.map(|b| b.data_arc());
    let mut xhat = vec![0.0; xd.len()];
    let mut inv_std = vec![0.0; rows];
    let mut out = vec![0.0; xd.len()];
    for r in 0..rows {
        let row = &xd[r * c..(r + 1) * c];
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std[r] = istd;
        for j in 0..c {
            let h = (row[j] - mean) * istd;
            xhat[r * c + j] = h;
            let mut y = h;
            if let Some(g) = &gd {
                y *= g[j];
            }
            if let Some(b) = &bd {
                y += b[j];
            }
            out[r * c + j] = y;
        }
    }
    let xn = x.node().cloned();
    let gn = gamma.and_then(|g| g.node().cloned());
    let bn = beta.and_then(|b| b.node().cloned());
    let node = if xn.is_some() || gn.is_some() || bn.is_some() {
        let parents = parents_of(&[xn.clone(), gn.clone(), bn.clone()]);
        let xhat = Arc::new(xhat);
        let inv_std = Arc::new(inv_std);
        Some(GradNode::op(xd.len(), parents, move |gy| {
            if let Some(xn) = &xn {
                let mut gx = vec![0.0; rows * c];
                for r in 0..rows {
                    let istd = inv_std[r];
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..c {
                        let idx = r * c + j;
                        let mut dh = gy[idx];
                        if let Some(g) = &gd {
                            dh *= g[j];
                        }
                        mean_dh += dh;
                        mean_dh_h += dh * xhat[idx];
                    }
                    mean_dh /= c as f64;
                    mean_dh_h /= c as f64;
                    for j in 0..c {
                        let idx = r * c + j;
                        let mut dh = gy[idx];
                        if let Some(g) = &gd {
                            dh *= g[j];
                        }
                        gx[idx] = istd * (dh - mean_dh - xhat[idx] * mean_dh_h);
                    }
                }
                xn.accumulate(&gx);
            }
            if let Some(gn) = &gn {
                let mut gg = vec![0.0; c];
                for r in 0..rows {
                    for j in 0..c {
                        gg[j] += gy[r * c + j] * xhat[r * c + j];
                    }
                }
                gn.accumulate(&gg);
            }
            if let Some(bn) = &bn {
                let mut gb = vec![0.0; c];
                for r in 0..rows {
                    for j in 0..c {
                        gb[j] += gy[r * c + j];
                    }
                }
                bn.accumulate(&gb);
            }
        }))
    } else {
        None
    };
    finish("layernorm", shape, x.dtype(), out, node)
}

#[derive(Clone, Copy)]
struct Corner {
    idx: usize,
    weight: f64,
}

/// Bilinear sampling of an `[H,W,C]` map at `[N,2]` normalized `(x,y)` points.
/// Align-corners-false: pixel `(i,j)` has center `((j+0.5)/W, (i+0.5)/H)`.
/// Points outside `[0,1]^2` read zeros (zero padding).
pub fn bilinear_sample(map: &Tensor, points: &Tensor) -> Result<Tensor> {
    check_same_dtype("bilinear_sample", map, points)?;
    if map.shape().len() != 3 {
        return Err(dim_err("bilinear_sample", format!("map shape {:?}, expected [H,W,C]", map.shape())));
    }
    if points.shape().len() != 2 || points.shape()[1] != 2 {
        return Err(dim_err("bilinear_sample", format!("points shape {:?}, expected [N,2]", points.shape())));
    }
    let (h, w, c) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    let n = points.shape()[0];
    let (md, pd) = (map.data(), points.data());
    let mut out = vec![0.0; n * c];
    for q in 0..n {
        let px = pd[q * 2] * w as f64 - 0.5;
        let py = pd[q * 2 + 1] * h as f64 - 0.5;
        let x0 = px.floor();
        let y0 = py.floor();
        let fx = px - x0;
        let fy = py - y0;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            let yi = y0 as i64 + dy;
            if yi < 0 || yi >= h as i64 || wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                let xi = x0 as i64 + dx;
                if xi < 0 || xi >= w as i64 || wx == 0.0 {
                    continue;
                }
                let base = (yi as usize * w + xi as usize) * c;
                let wgt = wx * wy;
                for ch in 0..c {
                    out[q * c + ch] += wgt * md[base + ch];
                }
            }
        }
    }
    let mn = map.node().cloned();
    let pn = points.node().cloned();
    let node = if mn.is_some() || pn.is_some() {
        let parents = parents_of(&[mn.clone(), pn.clone()]);
        let md = map.data_arc();
        let pd = points.data_arc();
        Some(GradNode::op(n * c, parents, move |gy| {
            let mut gmap = mn.as_ref().map(|_| vec![0.0; h * w * c]);
            let mut gpts = pn.as_ref().map(|_| vec![0.0; n * 2]);
            for q in 0..n {
                let px = pd[q * 2] * w as f64 - 0.5;
                let py = pd[q * 2 + 1] * h as f64 - 0.5;
                let x0 = px.floor();
                let y0 = py.floor();
                let fx = px - x0;
                let fy = py - y0;
                // Corner fetch with zero padding, shared by both rules.
                let fetch = |dy: i64, dx: i64| -> Option<usize> {
                    let yi = y0 as i64 + dy;
                    let xi = x0 as i64 + dx;
                    if yi < 0 || yi >= h as i64 || xi < 0 || xi >= w as i64 {
                        None
                    } else {
                        Some((yi as usize * w + xi as usize) * c)
                    }
                };
                let corners = [
                    (fetch(0, 0), (1.0 - fx) * (1.0 - fy), -(1.0 - fy), -(1.0 - fx)),
                    (fetch(0, 1), fx * (1.0 - fy), 1.0 - fy, -fx),
                    (fetch(1, 0), (1.0 - fx) * fy, -fy, 1.0 - fx),
                    (fetch(1, 1), fx * fy, fy, fx),
                ];
                let mut gx_acc = 0.0;
                let mut gy_acc = 0.0;
                for (base, wgt, dwdx, dwdy) in corners {
                    let Some(base) = base else { continue };
                    for ch in 0..c {
                        let g = gy[q * c + ch];
                        if let Some(gm) = gmap.as_mut() {
                            gm[base + ch] += wgt * g;
                        }
                        let v = md[base + ch];
                        gx_acc += g * dwdx * v;
                        gy_acc += g * dwdy * v;
                    }
                }
                if let Some(gp) = gpts.as_mut() {
                    gp[q * 2] = gx_acc * w as f64;
                    gp[q * 2 + 1] = gy_acc * h as f64;
                }
            }
            if let (Some(mn), Some(gm)) = (&mn, &gmap) {
                mn.accumulate(gm);
            }
            if let (Some(pn), Some(gp)) = (&pn, &gpts) {
                pn.accumulate(gp);
            }
        }))
    } else {
        None
    };
    finish("bilinear_sample", vec![n, c], map.dtype(), out, node)
}

/// 3x3 stride-1 max pooling over an `[H,W,C]` map, same spatial shape.
/// Out-of-bounds neighbors are excluded from the max rather than padded.
pub fn maxpool2d(map: &Tensor) -> Result<Tensor> {
    if map.shape().len() != 3 {
        return Err(dim_err("maxpool2d", format!("map shape {:?}, expected [H,W,C]", map.shape())));
    }
    let (h, w, c) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    let md = map.data();
    let mut out = vec![0.0; md.len()];
    let mut argmax = vec![0usize; md.len()];
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for di in -1i64..=1 {
                    let y = i as i64 + di;
                    if y < 0 || y >= h as i64 {
                        continue;
                    }
                    for dj in -1i64..=1 {
                        let x = j as i64 + dj;
                        if x < 0 || x >= w as i64 {
                            continue;
                        }
                        let idx = (y as usize * w + x as usize) * c + ch;
                        if md[idx] > best {
                            best = md[idx];
                            best_idx = idx;
                        }
                    }
                }
                let oidx = (i * w + j) * c + ch;
                out[oidx] = best;
                argmax[oidx] = best_idx;
            }
        }
    }
    let node = map.node().cloned().map(|mn| {
        let numel = md.len();
        let argmax = Arc::new(argmax);
        GradNode::op(numel, vec![Rc::clone(&mn)], move |gy| {
            let mut gm = vec![0.0; numel];
            for (o, &src) in argmax.iter().enumerate() {
                gm[src] += gy[o];
            }
            mn.accumulate(&gm);
        })
    });
    finish("maxpool2d", map.shape().to_vec(), map.dtype(), out, node)
}

fn unary(
    op: &'static str,
    x: &Tensor,
    forward: impl Fn(f64) -> f64,
    // derivative expressed in terms of (input, output)
    derivative: impl Fn(f64, f64) -> f64 + 'static,
) -> Result<Tensor> {
    let out: Vec<f64> = x.data().iter().map(|&v| forward(v)).collect();
    let out = Arc::new(out);
    let node = x.node().cloned().map(|xn| {
        let xd = x.data_arc();
        let yd = Arc::clone(&out);
        let numel = xd.len();
        GradNode::op(numel, vec![Rc::clone(&xn)], move |gy| {
            let gx: Vec<f64> = (0..numel).map(|i| gy[i] * derivative(xd[i], yd[i])).collect();
            xn.accumulate(&gx);
        })
    });
    Tensor::from_arc(op, x.shape().to_vec(), out, x.dtype(), node)
}

pub fn relu(x: &Tensor) -> Result<Tensor> {
    unary("relu", x, |v| v.max(0.0), |v, _| if v > 0.0 { 1.0 } else { 0.0 })
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    unary(
        "sigmoid",
        x,
        |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        },
        |_, s| s * (1.0 - s),
    )
}

pub fn scale(x: &Tensor, factor: f64) -> Result<Tensor> {
    unary("scale", x, |v| v * factor, move |_, _| factor)
}

fn binary_same_shape(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    forward: impl Fn(f64, f64) -> f64,
    // (ga, gb) factors per element given (a, b)
    grads: impl Fn(f64, f64) -> (f64, f64) + 'static,
) -> Result<Tensor> {
    check_same_dtype(op, a, b)?;
    if a.shape() != b.shape() {
        return Err(dim_err(op, format!("shape {:?} vs {:?}", a.shape(), b.shape())));
    }
    let out: Vec<f64> = a.data().iter().zip(b.data()).map(|(&x, &y)| forward(x, y)).collect();
    let an = a.node().cloned();
    let bn = b.node().cloned();
    let node = if an.is_some() || bn.is_some() {
        let parents = parents_of(&[an.clone(), bn.clone()]);
        let (ad, bd) = (a.data_arc(), b.data_arc());
        let numel = ad.len();
        Some(GradNode::op(numel, parents, move |gy| {
            if an.is_some() || bn.is_some() {
                let mut ga = vec![0.0; numel];
                let mut gb = vec![0.0; numel];
                for i in 0..numel {
                    let (da, db) = grads(ad[i], bd[i]);
                    ga[i] = gy[i] * da;
                    gb[i] = gy[i] * db;
                }
                if let Some(an) = &an {
                    an.accumulate(&ga);
                }
                if let Some(bn) = &bn {
                    bn.accumulate(&gb);
                }
            }
        }))
    } else {
        None
    };
    finish(op, a.shape().to_vec(), a.dtype(), out, node)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary_same_shape("add", a, b, |x, y| x + y, |_, _| (1.0, 1.0))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    binary_same_shape("mul", a, b, |x, y| x * y, |x, y| (y, x))
}

/// Broadcast product of a `[K,C]` tensor with a per-row `[K,1]` gate. The one
/// broadcasting pattern the recalibration path needs.
pub fn mul_gate(x: &Tensor, gate: &Tensor) -> Result<Tensor> {
    check_same_dtype("mul_gate", x, gate)?;
    if x.shape().len() != 2 || gate.shape().len() != 2 || gate.shape()[1] != 1
        || x.shape()[0] != gate.shape()[0]
    {
        return Err(dim_err(
            "mul_gate",
            format!("non-broadcastable shapes {:?} x {:?}", x.shape(), gate.shape()),
        ));
    }
    let (k, c) = (x.shape()[0], x.shape()[1]);
    let (xd, gd) = (x.data(), gate.data());
    let mut out = vec![0.0; k * c];
    for r in 0..k {
        for j in 0..c {
            out[r * c + j] = xd[r * c + j] * gd[r];
        }
    }
    let xn = x.node().cloned();
    let gn = gate.node().cloned();
    let node = if xn.is_some() || gn.is_some() {
        let parents = parents_of(&[xn.clone(), gn.clone()]);
        let (xd, gd) = (x.data_arc(), gate.data_arc());
        Some(GradNode::op(k * c, parents, move |gy| {
            if let Some(xn) = &xn {
                let mut gx = vec![0.0; k * c];
                for r in 0..k {
                    for j in 0..c {
                        gx[r * c + j] = gy[r * c + j] * gd[r];
                    }
                }
                xn.accumulate(&gx);
            }
            if let Some(gn) = &gn {
                let mut gg = vec![0.0; k];
                for r in 0..k {
                    for j in 0..c {
                        gg[r] += gy[r * c + j] * xd[r * c + j];
                    }
                }
                gn.accumulate(&gg);
            }
        }))
    } else {
        None
    };
    finish("mul_gate", vec![k, c], x.dtype(), out, node)
}

/// Adds a `[C]` bias row to every row of a `[...,C]` tensor.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    check_same_dtype("add_bias", x, bias)?;
    let c = *x.shape().last().unwrap_or(&0);
    if bias.shape() != [c] || c == 0 {
        return Err(dim_err(
            "add_bias",
            format!("bias shape {:?} against input {:?}", bias.shape(), x.shape()),
        ));
    }
    let rows = x.numel() / c;
    let (xd, bd) = (x.data(), bias.data());
    let mut out = vec![0.0; xd.len()];
    for r in 0..rows {
        for j in 0..c {
            out[r * c + j] = xd[r * c + j] + bd[j];
        }
    }
    let xn = x.node().cloned();
    let bn = bias.node().cloned();
    let node = if xn.is_some() || bn.is_some() {
        let parents = parents_of(&[xn.clone(), bn.clone()]);
        let numel = xd.len();
        Some(GradNode::op(numel, parents, move |gy| {
            if let Some(xn) = &xn {
                xn.accumulate(gy);
            }
            if let Some(bn) = &bn {
                let mut gb = vec![0.0; c];
                for r in 0..rows {
                    for j in 0..c {
                        gb[j] += gy[r * c + j];
                    }
                }
                bn.accumulate(&gb);
            }
        }))
    } else {
        None
    };
    finish("add_bias", x.shape().to_vec(), x.dtype(), out, node)
}

/// Affine projection `x @ w + b`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    add_bias(&matmul(x, w)?, b)
}

pub fn sum_all(x: &Tensor) -> Result<Tensor> {
    let total: f64 = x.data().iter().sum();
    let node = x.node().cloned().map(|xn| {
        let numel = x.numel();
        GradNode::op(1, vec![Rc::clone(&xn)], move |gy| {
            xn.accumulate(&vec![gy[0]; numel]);
        })
    });
    finish("sum_all", vec![], x.dtype(), vec![total], node)
}

/// Concatenation of 2-D tensors along the row (token) axis.
pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| dim_err("concat_rows", "no inputs".into()))?;
    let c = if first.shape().len() == 2 {
        first.shape()[1]
    } else {
        return Err(dim_err("concat_rows", format!("rank-{} input", first.shape().len())));
    };
    let mut rows = 0;
    for p in parts {
        check_same_dtype("concat_rows", first, p)?;
        if p.shape().len() != 2 || p.shape()[1] != c {
            return Err(dim_err(
                "concat_rows",
                format!("column mismatch: {:?} vs {} columns", p.shape(), c),
            ));
        }
        rows += p.shape()[0];
    }
    let mut out = Vec::with_capacity(rows * c);
    for p in parts {
        out.extend_from_slice(p.data());
    }
    let nodes: Vec<Option<Rc<GradNode>>> = parts.iter().map(|p| p.node().cloned()).collect();
    let node = if nodes.iter().any(|n| n.is_some()) {
        let parents = parents_of(&nodes);
        let sizes: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
        Some(GradNode::op(rows * c, parents, move |gy| {
            let mut offset = 0;
            for (node, &size) in nodes.iter().zip(&sizes) {
                if let Some(n) = node {
                    n.accumulate(&gy[offset..offset + size]);
                }
                offset += size;
            }
        }))
    } else {
        None
    };
    finish("concat_rows", vec![rows, c], first.dtype(), out, node)
}

/// Column slice `[start, end)` of a 2-D tensor (head and offset extraction).
pub fn slice_cols(x: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    if x.shape().len() != 2 || start > end || end > x.shape()[1] {
        return Err(dim_err(
            "slice_cols",
            format!("cols {}..{} of shape {:?}", start, end, x.shape()),
        ));
    }
    let (rows, c) = (x.shape()[0], x.shape()[1]);
    let width = end - start;
    let xd = x.data();
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        out.extend_from_slice(&xd[r * c + start..r * c + end]);
    }
    let node = x.node().cloned().map(|xn| {
        let numel = x.numel();
        GradNode::op(rows * width, vec![Rc::clone(&xn)], move |gy| {
            let mut gx = vec![0.0; numel];
            for r in 0..rows {
                gx[r * c + start..r * c + end].copy_from_slice(&gy[r * width..(r + 1) * width]);
            }
            xn.accumulate(&gx);
        })
    });
    finish("slice_cols", vec![rows, width], x.dtype(), out, node)
}

/// Concatenation of 2-D tensors along the column axis (head reassembly).
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| dim_err("concat_cols", "no inputs".into()))?;
    if first.shape().len() != 2 {
        return Err(dim_err("concat_cols", format!("rank-{} input", first.shape().len())));
    }
    let rows = first.shape()[0];
    let mut total_cols = 0;
    for p in parts {
        check_same_dtype("concat_cols", first, p)?;
        if p.shape().len() != 2 || p.shape()[0] != rows {
            return Err(dim_err(
                "concat_cols",
                format!("row mismatch: {:?} vs {} rows", p.shape(), rows),
            ));
        }
        total_cols += p.shape()[1];
    }
    let mut out = Vec::with_capacity(rows * total_cols);
    for r in 0..rows {
        for p in parts {
            let w = p.shape()[1];
            out.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
        }
    }
    let nodes: Vec<Option<Rc<GradNode>>> = parts.iter().map(|p| p.node().cloned()).collect();
    let node = if nodes.iter().any(|n| n.is_some()) {
        let parents = parents_of(&nodes);
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[1]).collect();
        Some(GradNode::op(rows * total_cols, parents, move |gy| {
            let mut offset = 0;
            for (node, &w) in nodes.iter().zip(&widths) {
                if let Some(n) = node {
                    let mut gp = vec![0.0; rows * w];
                    for r in 0..rows {
                        gp[r * w..(r + 1) * w]
                            .copy_from_slice(&gy[r * total_cols + offset..r * total_cols + offset + w]);
                    }
                    n.accumulate(&gp);
                }
                offset += w;
            }
        }))
    } else {
        None
    };
    finish("concat_cols", vec![rows, total_cols], first.dtype(), out, node)
}

/// Row slice `[start, end)` of a 2-D tensor.
pub fn slice_rows(x: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    if x.shape().len() != 2 || start > end || end > x.shape()[0] {
        return Err(dim_err(
            "slice_rows",
            format!("rows {}..{} of shape {:?}", start, end, x.shape()),
        ));
    }
    let c = x.shape()[1];
    let out = x.data()[start * c..end * c].to_vec();
    let node = x.node().cloned().map(|xn| {
        let numel = x.numel();
        GradNode::op((end - start) * c, vec![Rc::clone(&xn)], move |gy| {
            let mut gx = vec![0.0; numel];
            gx[start * c..end * c].copy_from_slice(gy);
            xn.accumulate(&gx);
        })
    });
    finish("slice_rows", vec![end - start, c], x.dtype(), out, node)
}

/// Shape reinterpretation; row-major data is untouched.
pub fn reshape(x: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != x.numel() {
        return Err(dim_err(
            "reshape",
            format!("cannot view {:?} as {:?}", x.shape(), shape),
        ));
    }
    let node = x.node().cloned().map(|xn| {
        GradNode::op(numel, vec![Rc::clone(&xn)], move |gy| {
            xn.accumulate(gy);
        })
    });
    Tensor::from_arc("reshape", shape, x.data_arc(), x.dtype(), node)
}

/// Align-corners-false bilinear resize of an `[H,W,C]` map. Source coordinates
/// are clamped at the borders, so constant maps stay constant.
pub fn resize_bilinear(map: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if map.shape().len() != 3 {
        return Err(dim_err("resize_bilinear", format!("map shape {:?}, expected [H,W,C]", map.shape())));
    }
    if out_h == 0 || out_w == 0 {
        return Err(dim_err("resize_bilinear", format!("target {}x{}", out_h, out_w)));
    }
    let (h, w, c) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    if (out_h, out_w) == (h, w) {
        // Identity target: bit-exact passthrough.
        return reshape(map, map.shape().to_vec());
    }
    let md = map.data();
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    // Per output pixel: the four source corners and their weights.
    let mut corners: Vec<[Corner; 4]> = Vec::with_capacity(out_h * out_w);
    let mut out = vec![0.0; out_h * out_w * c];
    for i in 0..out_h {
        let py = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = py.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = py - y0 as f64;
        for j in 0..out_w {
            let px = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = px.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = px - x0 as f64;
            let quad = [
                Corner { idx: (y0 * w + x0) * c, weight: (1.0 - fx) * (1.0 - fy) },
                Corner { idx: (y0 * w + x1) * c, weight: fx * (1.0 - fy) },
                Corner { idx: (y1 * w + x0) * c, weight: (1.0 - fx) * fy },
                Corner { idx: (y1 * w + x1) * c, weight: fx * fy },
            ];
            let obase = (i * out_w + j) * c;
            for ch in 0..c {
                let mut acc = 0.0;
                for corner in quad {
                    acc += corner.weight * md[corner.idx + ch];
                }
                out[obase + ch] = acc;
            }
            corners.push(quad);
        }
    }
    let node = map.node().cloned().map(|mn| {
        let numel = md.len();
        let corners = Arc::new(corners);
        GradNode::op(out_h * out_w * c, vec![Rc::clone(&mn)], move |gy| {
            let mut gm = vec![0.0; numel];
            for (pix, quad) in corners.iter().enumerate() {
                let obase = pix * c;
                for ch in 0..c {
                    let g = gy[obase + ch];
                    for corner in quad {
                        gm[corner.idx + ch] += corner.weight * g;
                    }
                }
            }
            mn.accumulate(&gm);
        })
    });
    finish("resize_bilinear", vec![out_h, out_w, c], map.dtype(), out, node)
}
