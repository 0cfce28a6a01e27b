//! Multi-scale deformable attention transformer layer: offset-predicted
//! bilinear sampling over per-level value maps, softmax-combined per head,
//! with a post-norm residual FFN block.

use crate::numerics::{
    add, add_bias, bilinear_sample, concat_cols, layernorm, linear, matmul, mul, mul_gate, relu,
    reshape, slice_cols, slice_rows, softmax, Tensor, TensorError,
};

use super::{DeformableLayerParams, LN_EPS};

type Result<T> = std::result::Result<T, TensorError>;

/// Normalized pixel-center reference point for every query, replicated across
/// levels: query k at grid cell (i,j) of its own level maps to
/// ((j+0.5)/W, (i+0.5)/H).
fn reference_points(level_shapes: &[(usize, usize)], tokens: &Tensor) -> Result<Tensor> {
    let total: usize = level_shapes.iter().map(|(h, w)| h * w).sum();
    let mut data = Vec::with_capacity(total * 2);
    for &(h, w) in level_shapes {
        for i in 0..h {
            for j in 0..w {
                data.push((j as f64 + 0.5) / w as f64);
                data.push((i as f64 + 0.5) / h as f64);
            }
        }
    }
    Tensor::new(vec![total, 2], data, tokens.dtype())
}

/// One deformable attention layer over a token sequence split into
/// `level_shapes` spatial maps. `pos` carries positional plus level
/// embeddings and is added to the queries only.
pub fn deformable_layer(
    tokens: &Tensor,
    level_shapes: &[(usize, usize)],
    pos: &Tensor,
    params: &DeformableLayerParams,
) -> Result<Tensor> {
    if tokens.shape().len() != 2 {
        return Err(TensorError::Validation(format!(
            "tokens must be [K,C], got {:?}",
            tokens.shape()
        )));
    }
    let (k, c) = (tokens.shape()[0], tokens.shape()[1]);
    let total: usize = level_shapes.iter().map(|(h, w)| h * w).sum();
    if total != k {
        return Err(TensorError::Validation(format!(
            "level shapes {:?} cover {} tokens, sequence has {}",
            level_shapes, total, k
        )));
    }
    if level_shapes.len() != params.levels {
        return Err(TensorError::Validation(format!(
            "layer expects {} levels, got {}",
            params.levels,
            level_shapes.len()
        )));
    }
    if pos.shape() != tokens.shape() {
        return Err(TensorError::Validation(format!(
            "pos shape {:?} vs tokens {:?}",
            pos.shape(),
            tokens.shape()
        )));
    }
    let (m, l, p) = (params.heads, params.levels, params.points);
    if c % m != 0 {
        return Err(TensorError::Validation(format!("channels {} not divisible by heads {}", c, m)));
    }
    let d = c / m;
    let lp = l * p;

    let q = add(tokens, pos)?;
    let offsets = linear(&q, &params.offset_proj.weight, &params.offset_proj.bias)?;
    let logits = linear(&q, &params.weight_proj.weight, &params.weight_proj.bias)?;
    // Softmax jointly over the (level, point) axis, separately per head.
    let attn = reshape(
        &softmax(&reshape(&logits, vec![k, m, lp])?, 2)?,
        vec![k, m * lp],
    )?;
    let values = linear(tokens, &params.value_proj.weight, &params.value_proj.bias)?;

    let refs = reference_points(level_shapes, tokens)?;
    // Per-level normalization of offsets to the level's own grid.
    let mut level_starts = Vec::with_capacity(l);
    let mut inv_wh = Vec::with_capacity(l);
    let mut start = 0;
    for &(h, w) in level_shapes {
        level_starts.push(start);
        start += h * w;
        let mut scale_rows = Vec::with_capacity(k * 2);
        for _ in 0..k {
            scale_rows.push(1.0 / w as f64);
            scale_rows.push(1.0 / h as f64);
        }
        inv_wh.push(Tensor::new(vec![k, 2], scale_rows, tokens.dtype())?);
    }

    let mut head_outputs = Vec::with_capacity(m);
    for head in 0..m {
        let v_head = slice_cols(&values, head * d, (head + 1) * d)?;
        let mut head_out: Option<Tensor> = None;
        for (lvl, &(h, w)) in level_shapes.iter().enumerate() {
            let rows0 = level_starts[lvl];
            let value_map = reshape(&slice_rows(&v_head, rows0, rows0 + h * w)?, vec![h, w, d])?;
            for point in 0..p {
                let idx = (head * l + lvl) * p + point;
                let off = slice_cols(&offsets, idx * 2, idx * 2 + 2)?;
                let loc = add(&refs, &mul(&off, &inv_wh[lvl])?)?;
                let sampled = bilinear_sample(&value_map, &loc)?;
                let weight = slice_cols(&attn, idx, idx + 1)?;
                let term = mul_gate(&sampled, &weight)?;
                head_out = Some(match head_out {
                    Some(acc) => add(&acc, &term)?,
                    None => term,
                });
            }
        }
        head_outputs.push(head_out.expect("at least one level/point"));
    }
    let combined = concat_cols(&head_outputs.iter().collect::<Vec<_>>())?;
    let attn_out = linear(&combined, &params.output_proj.weight, &params.output_proj.bias)?;

    // Post-norm residual blocks.
    let mut x1 = add(tokens, &attn_out)?;
    if params.norm_enabled {
        x1 = layernorm(&x1, LN_EPS, Some(&params.norm1.gamma), Some(&params.norm1.beta))?;
    }
    let hidden = relu(&add_bias(
        &matmul(&x1, &params.ffn_hidden.weight)?,
        &params.ffn_hidden.bias,
    )?)?;
    let ffn = linear(&hidden, &params.ffn_out.weight, &params.ffn_out.bias)?;
    let mut out = add(&x1, &ffn)?;
    if params.norm_enabled {
        out = layernorm(&out, LN_EPS, Some(&params.norm2.gamma), Some(&params.norm2.beta))?;
    }
    Ok(out)
}

/// Sequential application of a stage's distinct layers; an empty stage is the
/// identity.
pub fn run_stage(
    tokens: &Tensor,
    level_shapes: &[(usize, usize)],
    pos: &Tensor,
    layers: &[DeformableLayerParams],
) -> Result<Tensor> {
    let mut x = tokens.clone();
    for layer in layers {
        x = deformable_layer(&x, level_shapes, pos, layer)?;
    }
    Ok(x)
}
