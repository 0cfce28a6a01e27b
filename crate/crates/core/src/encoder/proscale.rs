//! The staged forward pass: recalibrate coarse scales, then run stages over
//! progressively longer token sequences (K1, then K2, then K3).

use crate::numerics::{add_bias, concat_rows, reshape, Tensor, TensorError};
use crate::pyramid::{ScaleName, TokenPyramid};

use super::{lpe, run_stage, trc, update_counts, EncoderConfig, EncoderParams};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// Stage-3 output tokens, `[K3, C]`.
    pub s_out: Tensor,
    /// The K3 tokens split back into spatial maps, in (s4, s3, s2) order.
    pub per_scale: [Tensor; 3],
    /// Pixel-embedding map at s1 resolution.
    pub e_emb: Tensor,
    /// Layer-update counts for (s4, s3, s2).
    pub update_counts: (usize, usize, usize),
}

pub fn proscale_encode(
    pyramid: &TokenPyramid,
    config: &EncoderConfig,
    params: &EncoderParams,
) -> Result<EncoderOutput> {
    config.validate()?;
    if pyramid.channels() != config.channels {
        return Err(TensorError::Validation(format!(
            "pyramid channels {} != config channels {}",
            pyramid.channels(),
            config.channels
        )));
    }
    for (stage, expected) in [
        (&params.stage1, config.p1),
        (&params.stage2, config.p2),
        (&params.stage3, config.p3),
    ] {
        if stage.len() != expected {
            return Err(TensorError::Validation(format!(
                "stage layer count {} != configured depth {}",
                stage.len(),
                expected
            )));
        }
    }

    let s2_map = pyramid.map(ScaleName::S2);
    let (s4_map, s3_map) = if config.trc_enabled {
        (
            trc(pyramid.map(ScaleName::S4), s2_map, &params.trc)?,
            trc(pyramid.map(ScaleName::S3), s2_map, &params.trc)?,
        )
    } else {
        (pyramid.map(ScaleName::S4).clone(), pyramid.map(ScaleName::S3).clone())
    };

    let grid = |name: ScaleName| {
        let s = pyramid.spec(name);
        (s.height, s.width)
    };
    let tokens_of = |map: &Tensor| {
        let (h, w, c) = (map.shape()[0], map.shape()[1], map.shape()[2]);
        reshape(map, vec![h * w, c])
    };
    let pos_of = |name: ScaleName| {
        let i = name.index();
        add_bias(&params.encodings.positional[i], &params.encodings.level[i])
    };

    let counts = pyramid.counts;
    let (pos4, pos3, pos2) = (pos_of(ScaleName::S4)?, pos_of(ScaleName::S3)?, pos_of(ScaleName::S2)?);

    // Stage 1: coarsest tokens only.
    let shapes1 = [grid(ScaleName::S4)];
    let s_prime = run_stage(&tokens_of(&s4_map)?, &shapes1, &pos4, &params.stage1)?;

    // Stage 2: append s3.
    let shapes2 = [grid(ScaleName::S4), grid(ScaleName::S3)];
    let p2_tokens = concat_rows(&[&s_prime, &tokens_of(&s3_map)?])?;
    let pos_p2 = concat_rows(&[&pos4, &pos3])?;
    let s_double = run_stage(&p2_tokens, &shapes2, &pos_p2, &params.stage2)?;

    // Stage 3: append s2, reaching the full K3 sequence.
    let shapes3 = [grid(ScaleName::S4), grid(ScaleName::S3), grid(ScaleName::S2)];
    let p3_tokens = concat_rows(&[&s_double, &pyramid.tokens(ScaleName::S2)?])?;
    let pos_p3 = concat_rows(&[&pos4, &pos3, &pos2])?;
    let s_out = run_stage(&p3_tokens, &shapes3, &pos_p3, &params.stage3)?;

    // Split the K3 tokens back into per-scale maps.
    let split = |start: usize, end: usize, name: ScaleName| -> Result<Tensor> {
        let spec = pyramid.spec(name);
        reshape(
            &crate::numerics::slice_rows(&s_out, start, end)?,
            vec![spec.height, spec.width, spec.channels],
        )
    };
    let s4_out = split(0, counts.n4, ScaleName::S4)?;
    let s3_out = split(counts.n4, counts.k2, ScaleName::S3)?;
    let s2_out = split(counts.k2, counts.k3, ScaleName::S2)?;

    let e_emb = if config.lpe_fusion {
        lpe(pyramid.map(ScaleName::S1), Some(&s2_out))?
    } else {
        lpe(pyramid.map(ScaleName::S1), None)?
    };

    Ok(EncoderOutput {
        s_out,
        per_scale: [s4_out, s3_out, s2_out],
        e_emb,
        update_counts: update_counts(config),
    })
}
