//! Progressive token-length transformer encoder with an exact-integer
//! analytical compute-cost model.
//!
//! The encoder runs its early layers on only the coarsest backbone scale and
//! appends finer scales stage by stage, recalibrating the coarse tokens with
//! a cheap fine-scale gate and replacing the convolutional pixel-embedding
//! path with a parameter-free pooled one. The cost model reproduces the
//! resulting encoder-MAC reductions against a flat six-layer baseline.

pub mod analysis;
pub mod costmodel;
pub mod encoder;
pub mod gradchecks;
pub mod numerics;
pub mod pyramid;
