//! Named finite-difference checks covering every differentiable op and a
//! small whole-encoder instance. Shared by the CLI `gradcheck` command and
//! the acceptance suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::{
    deformable_layer, proscale_encode, trc, EncoderConfig, EncoderParams, TrcParams,
};
use crate::numerics::{
    add, bilinear_sample, finite_diff_check, layernorm, matmul, maxpool2d, random_projection, relu,
    resize_bilinear, sigmoid, softmax, sum_all, Dtype, GradCheckReport, Tensor, TensorError,
};
use crate::pyramid::{build_pyramid, PyramidSource, ScaleName, ScaleSpec};

type Result<T> = std::result::Result<T, TensorError>;

pub struct RegisteredCheck {
    pub name: &'static str,
    runner: Box<dyn Fn(u64, f64) -> Result<GradCheckReport>>,
}

impl RegisteredCheck {
    pub fn run(&self, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
        (self.runner)(seed, tolerance)
    }
}

fn randn(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape, data, Dtype::F64).expect("finite init")
}

fn check(
    name: &'static str,
    make_inputs: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor> + 'static,
    f: impl Fn(&[Tensor], u64) -> Result<Tensor> + 'static,
) -> RegisteredCheck {
    RegisteredCheck {
        name,
        runner: Box::new(move |seed, tolerance| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = make_inputs(&mut rng);
            finite_diff_check(name, |xs| f(xs, seed), &inputs, tolerance, seed)
        }),
    }
}

/// The full suite, ordered roughly primitive-first.
pub fn registered_checks() -> Vec<RegisteredCheck> {
    vec![
        check(
            "matmul",
            |rng| vec![randn(vec![3, 4], rng), randn(vec![4, 2], rng)],
            |xs, _| sum_all(&matmul(&xs[0], &xs[1])?),
        ),
        check(
            "softmax",
            |rng| vec![randn(vec![4, 6], rng)],
            |xs, seed| random_projection(&softmax(&xs[0], 1)?, seed),
        ),
        check(
            "layernorm",
            |rng| vec![randn(vec![5, 8], rng), randn(vec![8], rng), randn(vec![8], rng)],
            |xs, seed| random_projection(&layernorm(&xs[0], 1e-5, Some(&xs[1]), Some(&xs[2]))?, seed),
        ),
        check(
            "relu",
            |rng| vec![randn(vec![6, 5], rng)],
            |xs, seed| random_projection(&relu(&xs[0])?, seed),
        ),
        check(
            "sigmoid",
            |rng| vec![randn(vec![6, 5], rng)],
            |xs, seed| random_projection(&sigmoid(&xs[0])?, seed),
        ),
        check(
            "bilinear_sample",
            |rng| {
                let map = randn(vec![5, 6, 3], rng);
                // Points spill past [0,1] to exercise the zero-padding rule.
                let pts: Vec<f64> = (0..20).map(|_| rng.gen_range(-0.2..1.2)).collect();
                let points = Tensor::new(vec![10, 2], pts, Dtype::F64).unwrap();
                vec![map, points]
            },
            |xs, seed| random_projection(&bilinear_sample(&xs[0], &xs[1])?, seed),
        ),
        check(
            "maxpool2d",
            |rng| vec![randn(vec![5, 4, 2], rng)],
            |xs, seed| random_projection(&maxpool2d(&xs[0])?, seed),
        ),
        check(
            "resize_bilinear",
            |rng| vec![randn(vec![5, 7, 2], rng)],
            |xs, seed| random_projection(&resize_bilinear(&xs[0], 3, 4)?, seed),
        ),
        trc_check(),
        deformable_check(),
        encoder_check(),
    ]
}

fn trc_check() -> RegisteredCheck {
    check(
        "trc",
        |rng| {
            vec![
                randn(vec![2, 2, 6], rng),  // coarse map
                randn(vec![4, 4, 6], rng),  // fine map
                randn(vec![6, 1], rng),     // phi weight
            ]
        },
        |xs, seed| {
            let params = TrcParams {
                phi: crate::encoder::LinearParams {
                    weight: xs[2].clone(),
                    bias: Tensor::zeros(vec![1], Dtype::F64),
                },
                epsilon: 0.1,
            };
            random_projection(&trc(&xs[0], &xs[1], &params)?, seed)
        },
    )
}

fn small_config() -> EncoderConfig {
    EncoderConfig {
        channels: 8,
        heads: 2,
        points: 2,
        ffn_dim: 16,
        ..EncoderConfig::new(1, 1, 1)
    }
}

fn deformable_check() -> RegisteredCheck {
    RegisteredCheck {
        name: "deformable_layer",
        runner: Box::new(|seed, tolerance| {
            let config = EncoderConfig { seed, ..small_config() };
            let scales = [
                ScaleSpec { name: ScaleName::S1, stride: 4, height: 4, width: 8, channels: 8 },
                ScaleSpec { name: ScaleName::S2, stride: 8, height: 2, width: 4, channels: 8 },
                ScaleSpec { name: ScaleName::S3, stride: 16, height: 2, width: 2, channels: 8 },
                ScaleSpec { name: ScaleName::S4, stride: 32, height: 1, width: 1, channels: 8 },
            ];
            let params = EncoderParams::init_random(&config, &scales, Dtype::F64)?;
            let template = params.stage2[0].clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517c_c1b7_2722_0a95);
            // 12 tokens over two levels: a 2x2 and a 2x4 grid.
            let shapes = [(2usize, 2usize), (2usize, 4usize)];
            let inputs = vec![
                randn(vec![12, 8], &mut rng),                   // tokens
                template.value_proj.weight.clone(),
                template.offset_proj.weight.clone(),
                template.weight_proj.weight.clone(),
                template.output_proj.weight.clone(),
                template.ffn_hidden.weight.clone(),
            ];
            let pos = randn(vec![12, 8], &mut rng);
            finite_diff_check(
                "deformable_layer",
                move |xs| {
                    let mut layer = template.clone();
                    layer.value_proj.weight = xs[1].clone();
                    layer.offset_proj.weight = xs[2].clone();
                    layer.weight_proj.weight = xs[3].clone();
                    layer.output_proj.weight = xs[4].clone();
                    layer.ffn_hidden.weight = xs[5].clone();
                    random_projection(&deformable_layer(&xs[0], &shapes, &pos, &layer)?, seed)
                },
                &inputs,
                tolerance,
                seed,
            )
        }),
    }
}

fn encoder_check() -> RegisteredCheck {
    RegisteredCheck {
        name: "encoder",
        runner: Box::new(|seed, tolerance| {
            let config = EncoderConfig { seed, ..small_config() };
            let pyramid = build_pyramid(
                32,
                32,
                8,
                PyramidSource::Synthetic { seed: seed ^ 0xa076_1d64_78bd_642f, dtype: Dtype::F64 },
            )?;
            let params = EncoderParams::init_random(&config, &pyramid.scales, Dtype::F64)?;
            let channels = pyramid.channels();
            // s1 feeds the max-pooled embedding path; probing it lands on
            // argmax kinks where central differences are meaningless, so it
            // stays a constant here (the maxpool rule has its own check).
            let s1 = pyramid.map(ScaleName::S1).clone();
            let inputs: Vec<Tensor> = [ScaleName::S2, ScaleName::S3, ScaleName::S4]
                .iter()
                .map(|&n| pyramid.map(n).clone())
                .collect();
            let (h, w) = (32, 32);
            finite_diff_check(
                "encoder",
                move |xs| {
                    let maps: [Tensor; 4] =
                        [s1.clone(), xs[0].clone(), xs[1].clone(), xs[2].clone()];
                    let pyr = build_pyramid(h, w, channels, PyramidSource::Tensors(Box::new(maps)))?;
                    let out = proscale_encode(&pyr, &config, &params)?;
                    add(
                        &random_projection(&out.s_out, seed)?,
                        &random_projection(&out.e_emb, seed ^ 1)?,
                    )
                },
                &inputs,
                tolerance,
                seed,
            )
        }),
    }
}
