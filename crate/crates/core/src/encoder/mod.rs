//! The staged encoder: token recalibration, multi-scale deformable attention
//! layers, progressively widening stages, and the pixel-embedding path.

mod deformable;
mod lpe;
mod proscale;
mod trc;

pub use deformable::{deformable_layer, run_stage};
pub use lpe::{lpe, lpe_parameters, lpe_with_pool, PoolKind};
pub use proscale::{proscale_encode, EncoderOutput};
pub use trc::trc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::numerics::{Dtype, Tensor, TensorError};
use crate::pyramid::{pos_encodings, PosEncodings, ScaleSpec};

type Result<T> = std::result::Result<T, TensorError>;

/// Layernorm epsilon used throughout the encoder.
pub const LN_EPS: f64 = 1e-5;

/// Stage depths and attention hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub p1: usize,
    pub p2: usize,
    pub p3: usize,
    pub channels: usize,
    pub heads: usize,
    pub points: usize,
    pub ffn_dim: usize,
    pub epsilon: f64,
    pub trc_enabled: bool,
    pub lpe_fusion: bool,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            p1: 1,
            p2: 1,
            p3: 1,
            channels: 256,
            heads: 8,
            points: 4,
            ffn_dim: 1024,
            epsilon: 0.1,
            trc_enabled: true,
            lpe_fusion: true,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn new(p1: usize, p2: usize, p3: usize) -> EncoderConfig {
        EncoderConfig { p1, p2, p3, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.heads == 0 || self.points == 0 || self.ffn_dim == 0 {
            return Err(TensorError::Validation("channels/heads/points/ffn_dim must be positive".into()));
        }
        if self.channels % self.heads != 0 {
            return Err(TensorError::Validation(format!(
                "channels {} not divisible by heads {}",
                self.channels, self.heads
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(TensorError::Validation(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }
}

/// Per-scale layer-update counts `(s4, s3, s2)` implied by the stage depths.
pub fn update_counts(config: &EncoderConfig) -> (usize, usize, usize) {
    (
        config.p1 + config.p2 + config.p3,
        config.p2 + config.p3,
        config.p3,
    )
}

#[derive(Debug, Clone)]
pub struct LinearParams {
    /// `[in, out]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNormParams {
    fn identity(c: usize, dtype: Dtype) -> LayerNormParams {
        LayerNormParams {
            gamma: Tensor::full(vec![c], 1.0, dtype),
            beta: Tensor::zeros(vec![c], dtype),
        }
    }
}

/// Weights of one deformable attention transformer layer.
#[derive(Debug, Clone)]
pub struct DeformableLayerParams {
    /// Number of feature levels this layer attends over (1, 2 or 3).
    pub levels: usize,
    pub heads: usize,
    pub points: usize,
    pub value_proj: LinearParams,
    pub offset_proj: LinearParams,
    pub weight_proj: LinearParams,
    pub output_proj: LinearParams,
    pub norm1: LayerNormParams,
    pub norm2: LayerNormParams,
    pub ffn_hidden: LinearParams,
    pub ffn_out: LinearParams,
    /// Test hook: bypass both layernorms so degenerate parameter settings
    /// produce closed-form outputs.
    pub norm_enabled: bool,
}

/// Gating parameters of the token-recalibration path.
#[derive(Debug, Clone)]
pub struct TrcParams {
    /// `C -> 1` channel-reduction map.
    pub phi: LinearParams,
    pub epsilon: f64,
}

impl TrcParams {
    pub fn zero_phi(channels: usize, epsilon: f64, dtype: Dtype) -> TrcParams {
        TrcParams {
            phi: LinearParams {
                weight: Tensor::zeros(vec![channels, 1], dtype),
                bias: Tensor::zeros(vec![1], dtype),
            },
            epsilon,
        }
    }
}

/// Every weight of the staged encoder.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub stage1: Vec<DeformableLayerParams>,
    pub stage2: Vec<DeformableLayerParams>,
    pub stage3: Vec<DeformableLayerParams>,
    pub trc: TrcParams,
    pub encodings: PosEncodings,
}

struct ParamRng {
    rng: ChaCha8Rng,
    std: f64,
    dtype: Dtype,
}

impl ParamRng {
    fn gaussian(&mut self, shape: Vec<usize>) -> Tensor {
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut self.rng);
                v * self.std
            })
            .collect();
        Tensor::new(shape, data, self.dtype).expect("finite init")
    }

    fn linear(&mut self, fan_in: usize, fan_out: usize) -> LinearParams {
        LinearParams {
            weight: self.gaussian(vec![fan_in, fan_out]),
            bias: Tensor::zeros(vec![fan_out], self.dtype),
        }
    }
}

fn init_layer(config: &EncoderConfig, levels: usize, rng: &mut ParamRng, random_offsets: bool) -> DeformableLayerParams {
    let c = config.channels;
    let mlp = config.heads * levels * config.points;
    let offset_proj = if random_offsets {
        rng.linear(c, mlp * 2)
    } else {
        // Zero offsets: every query starts by sampling its own pixel center.
        LinearParams {
            weight: Tensor::zeros(vec![c, mlp * 2], rng.dtype),
            bias: Tensor::zeros(vec![mlp * 2], rng.dtype),
        }
    };
    DeformableLayerParams {
        levels,
        heads: config.heads,
        points: config.points,
        value_proj: rng.linear(c, c),
        offset_proj,
        weight_proj: rng.linear(c, mlp),
        output_proj: rng.linear(c, c),
        norm1: LayerNormParams::identity(c, rng.dtype),
        norm2: LayerNormParams::identity(c, rng.dtype),
        ffn_hidden: rng.linear(c, config.ffn_dim),
        ffn_out: rng.linear(config.ffn_dim, c),
        norm_enabled: true,
    }
}

impl EncoderParams {
    /// Seeded untrained initialization: Gaussian std 0.02 projections, zero
    /// offset projection, identity layernorm affine.
    pub fn init(config: &EncoderConfig, scales: &[ScaleSpec; 4], dtype: Dtype) -> Result<EncoderParams> {
        Self::build(config, scales, dtype, false)
    }

    /// Fully random initialization (offset projection included), for gradient
    /// checks that need sampling locations away from interpolation kinks.
    pub fn init_random(config: &EncoderConfig, scales: &[ScaleSpec; 4], dtype: Dtype) -> Result<EncoderParams> {
        Self::build(config, scales, dtype, true)
    }

    fn build(
        config: &EncoderConfig,
        scales: &[ScaleSpec; 4],
        dtype: Dtype,
        random_offsets: bool,
    ) -> Result<EncoderParams> {
        config.validate()?;
        let mut rng = ParamRng {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            std: 0.02,
            dtype,
        };
        let stage = |n: usize, levels: usize, rng: &mut ParamRng| -> Vec<DeformableLayerParams> {
            (0..n).map(|_| init_layer(config, levels, rng, random_offsets)).collect()
        };
        let stage1 = stage(config.p1, 1, &mut rng);
        let stage2 = stage(config.p2, 2, &mut rng);
        let stage3 = stage(config.p3, 3, &mut rng);
        let trc = TrcParams {
            phi: rng.linear(config.channels, 1),
            epsilon: config.epsilon,
        };
        let mut encodings = pos_encodings(scales, config.seed)?;
        for t in encodings.positional.iter_mut().chain(encodings.level.iter_mut()) {
            *t = t.cast(dtype);
        }
        Ok(EncoderParams { stage1, stage2, stage3, trc, encodings })
    }
}
