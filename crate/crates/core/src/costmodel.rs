//! Exact-integer MAC accounting for the staged encoder and the flat six-layer
//! baseline it replaces. One MAC counts as one FLOP; biases, norms,
//! activations, softmax, pooling and resizing count zero.

use serde::Serialize;

use crate::encoder::EncoderConfig;
use crate::numerics::TensorError;
use crate::pyramid::token_counts;

type Result<T> = std::result::Result<T, TensorError>;

/// Geometry and width parameters the cost model depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostDims {
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub heads: usize,
    pub points: usize,
    pub ffn_dim: usize,
    pub baseline_layers: usize,
}

impl CostDims {
    pub fn new(image_height: usize, image_width: usize) -> CostDims {
        CostDims {
            image_height,
            image_width,
            channels: 256,
            heads: 8,
            points: 4,
            ffn_dim: 1024,
            baseline_layers: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StageCost {
    pub stage: usize,
    pub layer_count: usize,
    pub tokens: usize,
    pub levels: usize,
    pub macs: i128,
}

/// MAC breakdown with optional baseline comparison.
#[derive(Debug, Clone, Serialize)]
pub struct FlopsReport {
    pub dims: CostDims,
    pub per_stage: Vec<StageCost>,
    pub embedding_macs: i128,
    pub trc_macs: i128,
    pub total_macs: i128,
    pub baseline_total_macs: Option<i128>,
    pub reduction_pct: Option<f64>,
}

impl FlopsReport {
    pub fn total_gmacs(&self) -> f64 {
        self.total_macs as f64 / 1e9
    }
}

/// `tokens * c_in * c_out`.
pub fn macs_linear(tokens: usize, c_in: usize, c_out: usize) -> i128 {
    tokens as i128 * c_in as i128 * c_out as i128
}

/// MACs of one deformable layer over `tokens` queries attending `levels`
/// levels: the four projections, the sampling term, and the FFN.
pub fn macs_deformable_layer(tokens: usize, levels: usize, dims: &CostDims) -> i128 {
    let (c, m, p, f) = (dims.channels, dims.heads, dims.points, dims.ffn_dim);
    let mlp = m * levels * p;
    macs_linear(tokens, c, c)                      // value projection
        + macs_linear(tokens, c, c)                // output projection
        + macs_linear(tokens, c, mlp * 2)          // offset projection
        + macs_linear(tokens, c, mlp)              // attention-weight projection
        + (tokens * mlp * (c / m) * 2) as i128     // interpolate + weighted accumulate
        + macs_linear(tokens, c, 2 * f)            // ffn (two C*F products)
}

fn check_consistent(config: &EncoderConfig, dims: &CostDims) -> Result<()> {
    if config.channels != dims.channels
        || config.heads != dims.heads
        || config.points != dims.points
        || config.ffn_dim != dims.ffn_dim
    {
        return Err(TensorError::Validation(format!(
            "config width parameters (C={},M={},P={},F={}) disagree with cost dims (C={},M={},P={},F={})",
            config.channels, config.heads, config.points, config.ffn_dim,
            dims.channels, dims.heads, dims.points, dims.ffn_dim
        )));
    }
    Ok(())
}

/// Staged-encoder MAC total: per-stage layer costs plus the recalibration
/// gate. The pixel-embedding path is MAC-free (pooling/norm/relu convention).
pub fn macs_encoder(config: &EncoderConfig, dims: &CostDims) -> Result<FlopsReport> {
    check_consistent(config, dims)?;
    let counts = token_counts(dims.image_height, dims.image_width)?;
    let stage_defs = [
        (1, config.p1, counts.k1, 1),
        (2, config.p2, counts.k2, 2),
        (3, config.p3, counts.k3, 3),
    ];
    let per_stage: Vec<StageCost> = stage_defs
        .iter()
        .map(|&(stage, layer_count, tokens, levels)| StageCost {
            stage,
            layer_count,
            tokens,
            levels,
            macs: layer_count as i128 * macs_deformable_layer(tokens, levels, dims),
        })
        .collect();
    // Two gated scales, one C->1 dot product per token; resizing counts zero.
    let trc_macs = 2 * (counts.n3 + counts.n4) as i128 * dims.channels as i128;
    let embedding_macs = 0;
    let total_macs = per_stage.iter().map(|s| s.macs).sum::<i128>() + trc_macs + embedding_macs;
    Ok(FlopsReport {
        dims: *dims,
        per_stage,
        embedding_macs,
        trc_macs,
        total_macs,
        baseline_total_macs: None,
        reduction_pct: None,
    })
}

/// Flat-baseline MACs: `baseline_layers` full-length three-level layers plus
/// the convolutional embedding tail on s1 (lateral 1x1, output 3x3, mask 1x1).
pub fn macs_baseline(dims: &CostDims) -> Result<FlopsReport> {
    let counts = token_counts(dims.image_height, dims.image_width)?;
    let layer = macs_deformable_layer(counts.k3, 3, dims);
    let per_stage = vec![StageCost {
        stage: 0,
        layer_count: dims.baseline_layers,
        tokens: counts.k3,
        levels: 3,
        macs: dims.baseline_layers as i128 * layer,
    }];
    let c2 = dims.channels as i128 * dims.channels as i128;
    let embedding_macs = counts.n1 as i128 * (c2 + 9 * c2 + c2);
    let total_macs = per_stage[0].macs + embedding_macs;
    Ok(FlopsReport {
        dims: *dims,
        per_stage,
        embedding_macs,
        trc_macs: 0,
        total_macs,
        baseline_total_macs: None,
        reduction_pct: None,
    })
}

/// Attaches the baseline total and the percentage reduction to a report.
pub fn compare(report: &FlopsReport, baseline: &FlopsReport) -> Result<FlopsReport> {
    if report.dims.image_height != baseline.dims.image_height
        || report.dims.image_width != baseline.dims.image_width
        || report.dims.channels != baseline.dims.channels
    {
        return Err(TensorError::Validation(format!(
            "cannot compare reports with different dims: {:?} vs {:?}",
            report.dims, baseline.dims
        )));
    }
    let mut out = report.clone();
    out.baseline_total_macs = Some(baseline.total_macs);
    out.reduction_pct = Some(
        100.0 * (baseline.total_macs - report.total_macs) as f64 / baseline.total_macs as f64,
    );
    Ok(out)
}
