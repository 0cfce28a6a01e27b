//! Central-difference verification of the reverse-mode rules.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ops::{mul, sum_all};
use super::tensor::{Dtype, Result, Tensor, TensorError};

/// Outcome of one finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub op_name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
    pub probe_count: usize,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<24} max_rel={:.3e} max_abs={:.3e} probes={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.op_name,
            self.max_rel_error,
            self.max_abs_error,
            self.probe_count
        )
    }
}

/// Reduces an arbitrary tensor to a scalar via a fixed seeded random
/// projection, so vector-valued ops can be checked through one backward pass.
pub fn random_projection(y: &Tensor, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let weights: Vec<f64> = (0..y.numel()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let r = Tensor::new(y.shape().to_vec(), weights, y.dtype())?;
    sum_all(&mul(y, &r)?)
}

/// Checks the reverse-mode gradient of a scalar-valued function against
/// central differences with step `h = 1e-5 * (1 + |x|)` per coordinate.
///
/// For large inputs a seeded random subset of coordinates is probed; small
/// inputs are probed exhaustively.
pub fn finite_diff_check<F>(
    op_name: &str,
    f: F,
    inputs: &[Tensor],
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    const MAX_PROBES: usize = 300;

    for t in inputs {
        if t.dtype() != Dtype::F64 {
            return Err(TensorError::Gradient(format!(
                "{}: finite-difference checks require float64 inputs",
                op_name
            )));
        }
    }
    // Analytic pass over tracked leaf copies.
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|t| t.requires_grad())
        .collect::<Result<_>>()?;
    let output = f(&leaves)?;
    if output.numel() != 1 {
        return Err(TensorError::Gradient(format!(
            "{}: op under test must be scalar-valued, got shape {:?}",
            op_name,
            output.shape()
        )));
    }
    output.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|t| t.grad().expect("leaf gradient").data().to_vec())
        .collect();

    // Probe selection.
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        for k in 0..t.numel() {
            coords.push((i, k));
        }
    }
    if coords.len() > MAX_PROBES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(MAX_PROBES);
    }

    let eval = |point: &[Tensor]| -> Result<f64> {
        let y = f(point)?;
        Ok(y.value())
    };
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    for &(i, k) in &coords {
        let x = inputs[i].data()[k];
        let h = 1e-5 * (1.0 + x.abs());
        let perturbed = |delta: f64| -> Result<f64> {
            let mut point: Vec<Tensor> = inputs.to_vec();
            let mut data = inputs[i].data().to_vec();
            data[k] = x + delta;
            point[i] = Tensor::new(inputs[i].shape().to_vec(), data, Dtype::F64)?;
            eval(&point)
        };
        let numeric = (perturbed(h)? - perturbed(-h)?) / (2.0 * h);
        let g = analytic[i][k];
        if !numeric.is_finite() || !g.is_finite() {
            return Err(TensorError::Gradient(format!(
                "{}: non-finite gradient at input {} coordinate {} (analytic={}, numeric={})",
                op_name, i, k, g, numeric
            )));
        }
        let abs = (g - numeric).abs();
        // Scaled error: relative for large gradients, absolute near zero,
        // so cancellation noise on tiny gradients does not dominate.
        let rel = abs / (1.0 + g.abs().max(numeric.abs()));
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        op_name: op_name.to_string(),
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        passed: max_rel <= tolerance,
        probe_count: coords.len(),
    })
}
