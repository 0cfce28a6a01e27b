//! Token re-calibration: gate coarse-scale tokens with a per-token scalar
//! derived from the resized fine-scale map.

use crate::numerics::{linear, mul_gate, reshape, resize_bilinear, scale, sigmoid, Tensor, TensorError};

use super::TrcParams;

type Result<T> = std::result::Result<T, TensorError>;

/// `s_i * sigmoid(epsilon * phi(resize(s2)))`, both maps `[H,W,C]` spatial.
/// The gate is a scalar per token broadcast over channels, so the output
/// shape equals the input shape.
pub fn trc(s_i_map: &Tensor, s2_map: &Tensor, params: &TrcParams) -> Result<Tensor> {
    if s_i_map.shape().len() != 3 || s2_map.shape().len() != 3 {
        return Err(TensorError::Validation(format!(
            "trc expects [H,W,C] maps, got {:?} and {:?}",
            s_i_map.shape(),
            s2_map.shape()
        )));
    }
    let (h, w, c) = (s_i_map.shape()[0], s_i_map.shape()[1], s_i_map.shape()[2]);
    if s2_map.shape()[2] != c {
        return Err(TensorError::Validation(format!(
            "channel mismatch: target has {}, s2 has {}",
            c,
            s2_map.shape()[2]
        )));
    }
    let resized = resize_bilinear(s2_map, h, w)?;
    let flat = reshape(&resized, vec![h * w, c])?;
    let gate = sigmoid(&scale(&linear(&flat, &params.phi.weight, &params.phi.bias)?, params.epsilon)?)?;
    let tokens = reshape(s_i_map, vec![h * w, c])?;
    reshape(&mul_gate(&tokens, &gate)?, vec![h, w, c])
}
