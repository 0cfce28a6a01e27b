//! Light pixel embedding: parameter-free replacement for the convolutional
//! per-pixel embedding path on the finest scale.

use crate::numerics::{add, layernorm, maxpool2d, relu, resize_bilinear, Tensor, TensorError};

use super::LN_EPS;

type Result<T> = std::result::Result<T, TensorError>;

/// Pooling variant; average pooling exists only for the ablation hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Average,
}

/// 3x3 stride-1 average pooling over in-bounds neighbors (forward only).
fn avgpool2d(map: &Tensor) -> Result<Tensor> {
    let (h, w, c) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    let md = map.data();
    let mut out = vec![0.0; md.len()];
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let mut sum = 0.0;
                let mut count = 0;
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
                        sum += md[(y as usize * w + x as usize) * c + ch];
                        count += 1;
                    }
                }
                out[(i * w + j) * c + ch] = sum / count as f64;
            }
        }
    }
    Tensor::new(vec![h, w, c], out, map.dtype())
}

/// `relu(layernorm(maxpool(s1)))`, optionally fused additively with the
/// resized encoder-refined s2 map. No learnable parameters.
pub fn lpe(s1_map: &Tensor, fused_s2: Option<&Tensor>) -> Result<Tensor> {
    lpe_with_pool(s1_map, fused_s2, PoolKind::Max)
}

pub fn lpe_with_pool(s1_map: &Tensor, fused_s2: Option<&Tensor>, pool: PoolKind) -> Result<Tensor> {
    if s1_map.shape().len() != 3 {
        return Err(TensorError::Validation(format!(
            "lpe expects an [H,W,C] map, got {:?}",
            s1_map.shape()
        )));
    }
    let (h, w, c) = (s1_map.shape()[0], s1_map.shape()[1], s1_map.shape()[2]);
    let pooled = match pool {
        PoolKind::Max => maxpool2d(s1_map)?,
        PoolKind::Average => avgpool2d(s1_map)?,
    };
    let base = relu(&layernorm(&pooled, LN_EPS, None, None)?)?;
    match fused_s2 {
        None => Ok(base),
        Some(s2) => {
            if s2.shape()[2] != c {
                return Err(TensorError::Validation(format!(
                    "fusion channel mismatch: {} vs {}",
                    s2.shape()[2],
                    c
                )));
            }
            add(&base, &resize_bilinear(s2, h, w)?)
        }
    }
}

/// The op's parameter registry: empty by construction.
pub fn lpe_parameters() -> Vec<Tensor> {
    Vec::new()
}
