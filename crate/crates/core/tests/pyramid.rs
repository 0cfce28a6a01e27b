//! Token-count arithmetic, pyramid construction, and encoding properties.

use std::collections::HashSet;

use proscale_core::numerics::{Dtype, Tensor, TensorError};
use proscale_core::pyramid::{
    build_pyramid, pos_encodings, positional_encoding, token_counts, PyramidSource, ScaleName,
    ScaleSpec, POS_TEMPERATURE,
};

#[test]
fn token_counts_64x64() {
    let c = token_counts(64, 64).unwrap();
    assert_eq!((c.n1, c.n2, c.n3, c.n4), (256, 64, 16, 4));
    assert_eq!((c.k1, c.k2, c.k3), (4, 20, 84));
}

#[test]
fn token_counts_coco_scale_uses_ceil_division() {
    let c = token_counts(800, 1333).unwrap();
    assert_eq!(c.n4, 25 * 42); // ceil(800/32)=25, ceil(1333/32)=42
    assert_eq!(c.n3, 50 * 84);
    assert_eq!(c.n2, 100 * 167);
    assert_eq!(c.k1, 1050);
    assert_eq!(c.k2, 5250);
    assert_eq!(c.k3, 21950);
}

#[test]
fn contribution_shares_for_divisible_sizes() {
    // Any size divisible by 32 gives the exact 16:4:1 split of K3.
    for (h, w) in [(64, 64), (256, 512), (1024, 2048)] {
        let (s2, s3, s4) = token_counts(h, w).unwrap().contribution_shares();
        assert!((s2 - 100.0 * 16.0 / 21.0).abs() < 1e-9);
        assert!((s3 - 100.0 * 4.0 / 21.0).abs() < 1e-9);
        assert!((s4 - 100.0 / 21.0).abs() < 1e-9);
    }
}

#[test]
fn images_below_coarsest_stride_are_rejected() {
    assert!(matches!(token_counts(31, 64), Err(TensorError::Validation(_))));
    assert!(matches!(token_counts(64, 16), Err(TensorError::Validation(_))));
}

#[test]
fn synthetic_pyramid_is_deterministic_and_well_shaped() {
    let a = build_pyramid(64, 96, 8, PyramidSource::Synthetic { seed: 5, dtype: Dtype::F64 }).unwrap();
    let b = build_pyramid(64, 96, 8, PyramidSource::Synthetic { seed: 5, dtype: Dtype::F64 }).unwrap();
    for name in ScaleName::ALL {
        assert_eq!(a.map(name).data(), b.map(name).data());
        let spec = a.spec(name);
        assert_eq!(a.map(name).shape(), &[spec.height, spec.width, spec.channels]);
        assert_eq!(spec.height, 64usize.div_ceil(name.stride()));
        assert_eq!(spec.width, 96usize.div_ceil(name.stride()));
    }
    let other = build_pyramid(64, 96, 8, PyramidSource::Synthetic { seed: 6, dtype: Dtype::F64 }).unwrap();
    assert_ne!(a.map(ScaleName::S1).data(), other.map(ScaleName::S1).data());
}

#[test]
fn scales_use_distinct_random_streams() {
    let p = build_pyramid(64, 64, 4, PyramidSource::Synthetic { seed: 9, dtype: Dtype::F64 }).unwrap();
    let s3 = &p.map(ScaleName::S3).data()[..16];
    let s4 = &p.map(ScaleName::S4).data()[..16];
    assert_ne!(s3, s4);
}

#[test]
fn supplied_tensors_must_match_grid_shapes() {
    let maps: [Tensor; 4] = [
        Tensor::zeros(vec![16, 16, 4], Dtype::F64),
        Tensor::zeros(vec![8, 8, 4], Dtype::F64),
        Tensor::zeros(vec![4, 4, 4], Dtype::F64),
        Tensor::zeros(vec![3, 2, 4], Dtype::F64), // wrong: should be 2x2
    ];
    let err = build_pyramid(64, 64, 4, PyramidSource::Tensors(Box::new(maps))).unwrap_err();
    assert!(err.to_string().contains("s4"), "error should name the scale: {}", err);
}

#[test]
fn tokens_flatten_row_major() {
    let p = build_pyramid(64, 64, 4, PyramidSource::Synthetic { seed: 2, dtype: Dtype::F64 }).unwrap();
    let t = p.tokens(ScaleName::S3).unwrap();
    assert_eq!(t.shape(), &[16, 4]);
    assert_eq!(t.data(), p.map(ScaleName::S3).data());
}

#[test]
fn positional_encoding_bounded_and_distinct() {
    let spec = ScaleSpec::from_image(ScaleName::S3, 128, 160, 16);
    let enc = positional_encoding(&spec, POS_TEMPERATURE).unwrap();
    assert_eq!(enc.shape(), &[spec.tokens(), 16]);
    assert!(enc.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    // Every grid position gets a distinct encoding row.
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for row in enc.data().chunks(16) {
        assert!(seen.insert(row.iter().map(|v| v.to_bits()).collect()));
    }
}

#[test]
fn positional_encoding_requires_channels_divisible_by_four() {
    let spec = ScaleSpec { name: ScaleName::S4, stride: 32, height: 2, width: 2, channels: 6 };
    assert!(matches!(
        positional_encoding(&spec, POS_TEMPERATURE),
        Err(TensorError::Validation(_))
    ));
}

#[test]
fn pos_encodings_deterministic_per_seed() {
    let scales: [ScaleSpec; 4] =
        ScaleName::ALL.map(|n| ScaleSpec::from_image(n, 64, 64, 8));
    let a = pos_encodings(&scales, 3).unwrap();
    let b = pos_encodings(&scales, 3).unwrap();
    let c = pos_encodings(&scales, 4).unwrap();
    for i in 0..4 {
        assert_eq!(a.positional[i].data(), b.positional[i].data());
        assert_eq!(a.level[i].data(), b.level[i].data());
        assert_ne!(a.level[i].data(), c.level[i].data());
        assert_eq!(a.level[i].shape(), &[8]);
    }
}
