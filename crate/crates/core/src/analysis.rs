//! Token-redundancy profiling: mean cosine similarity between tokens and
//! their sequence-distance-d neighbors.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::numerics::{Dtype, Tensor, TensorError};
use crate::pyramid::{build_pyramid, PyramidSource, ScaleName, TokenPyramid};

type Result<T> = std::result::Result<T, TensorError>;

/// Mean cosine similarity per neighbor distance for one token sequence.
#[derive(Debug, Clone, Serialize)]
pub struct RedundancyProfile {
    pub scale: String,
    /// Index d holds the mean over pairs (t, t+d); distance 0 is always 1.
    pub mean_similarity: Vec<f64>,
    pub sample_count: Vec<usize>,
    /// Pairs dropped because one side had zero norm.
    pub skipped_count: Vec<usize>,
}

pub fn redundancy_profile(tokens: &Tensor, max_distance: usize, scale: &str) -> Result<RedundancyProfile> {
    if tokens.shape().len() != 2 {
        return Err(TensorError::Validation(format!(
            "redundancy profile expects [N,C] tokens, got {:?}",
            tokens.shape()
        )));
    }
    let (n, c) = (tokens.shape()[0], tokens.shape()[1]);
    if max_distance >= n {
        return Err(TensorError::Validation(format!(
            "max distance {} must be smaller than token count {}",
            max_distance, n
        )));
    }
    let data = tokens.data();
    let norms: Vec<f64> = (0..n)
        .map(|t| data[t * c..(t + 1) * c].iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut mean_similarity = Vec::with_capacity(max_distance + 1);
    let mut sample_count = Vec::with_capacity(max_distance + 1);
    let mut skipped_count = Vec::with_capacity(max_distance + 1);
    for d in 0..=max_distance {
        let mut sum = 0.0;
        let mut used = 0usize;
        let mut skipped = 0usize;
        for t in 0..n - d {
            if norms[t] == 0.0 || norms[t + d] == 0.0 {
                skipped += 1;
                continue;
            }
            let a = &data[t * c..(t + 1) * c];
            let b = &data[(t + d) * c..(t + d + 1) * c];
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            sum += dot / (norms[t] * norms[t + d]);
            used += 1;
        }
        mean_similarity.push(if used > 0 { sum / used as f64 } else { f64::NAN });
        sample_count.push(used);
        skipped_count.push(skipped);
    }
    Ok(RedundancyProfile {
        scale: scale.to_string(),
        mean_similarity,
        sample_count,
        skipped_count,
    })
}

/// Synthetic low-frequency pyramid: every scale samples the same smooth
/// per-channel sinusoid field at its own grid, so finer scales place
/// sequence-neighbors spatially closer together.
pub fn smooth_pyramid(
    image_height: usize,
    image_width: usize,
    channels: usize,
    seed: u64,
) -> Result<TokenPyramid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freqs: Vec<(f64, f64, f64)> = (0..channels)
        .map(|_| {
            (
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let mut maps = Vec::with_capacity(4);
    for name in ScaleName::ALL {
        let stride = name.stride();
        let (h, w) = (image_height.div_ceil(stride), image_width.div_ceil(stride));
        let mut data = Vec::with_capacity(h * w * channels);
        for i in 0..h {
            let y = (i as f64 + 0.5) / h as f64;
            for j in 0..w {
                let x = (j as f64 + 0.5) / w as f64;
                for &(a, b, phase) in &freqs {
                    data.push((std::f64::consts::TAU * (a * x + b * y) + phase).sin());
                }
            }
        }
        maps.push(Tensor::new(vec![h, w, channels], data, Dtype::F64)?);
    }
    build_pyramid(
        image_height,
        image_width,
        channels,
        PyramidSource::Tensors(Box::new(maps.try_into().expect("four scales"))),
    )
}
