//! Multi-scale backbone features in spatial and token form, token-count
//! arithmetic, and the positional/level encodings the encoder consumes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::numerics::{reshape, Dtype, Tensor, TensorError};

pub use crate::numerics::resize_bilinear;

type Result<T> = std::result::Result<T, TensorError>;

/// The four backbone scales, finest (stride 4) to coarsest (stride 32).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleName {
    S1,
    S2,
    S3,
    S4,
}

impl ScaleName {
    pub const ALL: [ScaleName; 4] = [ScaleName::S1, ScaleName::S2, ScaleName::S3, ScaleName::S4];

    pub fn stride(self) -> usize {
        match self {
            ScaleName::S1 => 4,
            ScaleName::S2 => 8,
            ScaleName::S3 => 16,
            ScaleName::S4 => 32,
        }
    }

    pub fn index(self) -> usize {
        match self {
            ScaleName::S1 => 0,
            ScaleName::S2 => 1,
            ScaleName::S3 => 2,
            ScaleName::S4 => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ScaleName::S1 => "s1",
            ScaleName::S2 => "s2",
            ScaleName::S3 => "s3",
            ScaleName::S4 => "s4",
        }
    }
}

/// Token-grid geometry of one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleSpec {
    pub name: ScaleName,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ScaleSpec {
    /// Grid derived from an image size by ceil division per stride.
    pub fn from_image(name: ScaleName, image_height: usize, image_width: usize, channels: usize) -> ScaleSpec {
        let stride = name.stride();
        ScaleSpec {
            name,
            stride,
            height: image_height.div_ceil(stride),
            width: image_width.div_ceil(stride),
            channels,
        }
    }

    pub fn tokens(&self) -> usize {
        self.height * self.width
    }
}

/// Per-scale token counts and the cumulative stage lengths K1 < K2 < K3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TokenCounts {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
}

/// Exact stage-length arithmetic for a given image size.
pub fn token_counts(image_height: usize, image_width: usize) -> Result<TokenCounts> {
    if image_height < 32 || image_width < 32 {
        return Err(TensorError::Validation(format!(
            "image {}x{} smaller than the coarsest stride 32",
            image_height, image_width
        )));
    }
    let n = |stride: usize| image_height.div_ceil(stride) * image_width.div_ceil(stride);
    let (n1, n2, n3, n4) = (n(4), n(8), n(16), n(32));
    Ok(TokenCounts { n1, n2, n3, n4, k1: n4, k2: n4 + n3, k3: n4 + n3 + n2 })
}

impl TokenCounts {
    /// Percentage of K3 contributed by each of {s2, s3, s4}.
    pub fn contribution_shares(&self) -> (f64, f64, f64) {
        let k3 = self.k3 as f64;
        (
            100.0 * self.n2 as f64 / k3,
            100.0 * self.n3 as f64 / k3,
            100.0 * self.n4 as f64 / k3,
        )
    }
}

/// The four backbone feature maps with their geometry and count bookkeeping.
#[derive(Debug, Clone)]
pub struct TokenPyramid {
    pub scales: [ScaleSpec; 4],
    /// Spatial form, `[H_l, W_l, C]` per scale, s1 first.
    pub maps: [Tensor; 4],
    pub counts: TokenCounts,
}

pub enum PyramidSource {
    /// Seeded standard-normal features.
    Synthetic { seed: u64, dtype: Dtype },
    /// Caller-supplied spatial maps s1..s4; shapes must match the
    /// stride-derived grids.
    Tensors(Box<[Tensor; 4]>),
}

pub fn build_pyramid(
    image_height: usize,
    image_width: usize,
    channels: usize,
    source: PyramidSource,
) -> Result<TokenPyramid> {
    let counts = token_counts(image_height, image_width)?;
    let scales: [ScaleSpec; 4] = ScaleName::ALL
        .map(|name| ScaleSpec::from_image(name, image_height, image_width, channels));
    let maps: [Tensor; 4] = match source {
        PyramidSource::Synthetic { seed, dtype } => {
            let mut out: Vec<Tensor> = Vec::with_capacity(4);
            for spec in &scales {
                // Distinct stream per scale so maps are independent.
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(spec.name.index() as u64 + 1));
                let data: Vec<f64> = (0..spec.tokens() * channels)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                out.push(Tensor::new(vec![spec.height, spec.width, channels], data, dtype)?);
            }
            out.try_into().expect("four scales")
        }
        PyramidSource::Tensors(tensors) => {
            for (spec, t) in scales.iter().zip(tensors.iter()) {
                let expected = [spec.height, spec.width, channels];
                if t.shape() != expected {
                    return Err(TensorError::Validation(format!(
                        "scale {} expects shape {:?}, got {:?}",
                        spec.name.label(),
                        expected,
                        t.shape()
                    )));
                }
            }
            *tensors
        }
    };
    Ok(TokenPyramid { scales, maps, counts })
}

impl TokenPyramid {
    pub fn channels(&self) -> usize {
        self.scales[0].channels
    }

    pub fn spec(&self, name: ScaleName) -> &ScaleSpec {
        &self.scales[name.index()]
    }

    pub fn map(&self, name: ScaleName) -> &Tensor {
        &self.maps[name.index()]
    }

    /// Row-major flattened token form `[(H_l*W_l), C]` of one scale.
    pub fn tokens(&self, name: ScaleName) -> Result<Tensor> {
        let spec = self.spec(name);
        reshape(self.map(name), vec![spec.tokens(), spec.channels])
    }
}

/// Sinusoidal positional tensor plus a seeded-random level embedding per scale.
#[derive(Debug, Clone)]
pub struct PosEncodings {
    /// `[tokens, C]` per scale, s1 first.
    pub positional: [Tensor; 4],
    /// `[C]` per scale.
    pub level: [Tensor; 4],
}

pub const POS_TEMPERATURE: f64 = 10000.0;

/// 2-D sinusoidal encoding: sin/cos series over normalized y coordinates in
/// the first C/2 channels, then the same over x.
pub fn positional_encoding(spec: &ScaleSpec, temperature: f64) -> Result<Tensor> {
    let c = spec.channels;
    if c % 4 != 0 {
        return Err(TensorError::Validation(format!(
            "positional encoding requires channels divisible by 4, got {}",
            c
        )));
    }
    let half = c / 2;
    let two_pi = std::f64::consts::TAU;
    let axis_series = |coord: f64, out: &mut Vec<f64>| {
        for k in 0..half {
            let freq = temperature.powf(2.0 * (k / 2) as f64 / half as f64);
            let v = coord / freq;
            out.push(if k % 2 == 0 { v.sin() } else { v.cos() });
        }
    };
    let mut data = Vec::with_capacity(spec.tokens() * c);
    for i in 0..spec.height {
        let y = (i as f64 + 0.5) / spec.height as f64 * two_pi;
        for j in 0..spec.width {
            let x = (j as f64 + 0.5) / spec.width as f64 * two_pi;
            axis_series(y, &mut data);
            axis_series(x, &mut data);
        }
    }
    Tensor::new(vec![spec.tokens(), c], data, Dtype::F64)
}

/// Builds positional and level encodings for all four scales. Level embeddings
/// are seeded-random stand-ins for learned ones.
pub fn pos_encodings(scales: &[ScaleSpec; 4], seed: u64) -> Result<PosEncodings> {
    let positional_vec: Vec<Tensor> = scales
        .iter()
        .map(|s| positional_encoding(s, POS_TEMPERATURE))
        .collect::<Result<_>>()?;
    let c = scales[0].channels;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c62_272e_07bb_0142);
    let level_vec: Vec<Tensor> = (0..4)
        .map(|_| {
            let data: Vec<f64> = (0..c).map(|_| StandardNormal.sample(&mut rng)).collect();
            Tensor::new(vec![c], data, Dtype::F64)
        })
        .collect::<Result<_>>()?;
    Ok(PosEncodings {
        positional: positional_vec.try_into().expect("four scales"),
        level: level_vec.try_into().expect("four scales"),
    })
}
