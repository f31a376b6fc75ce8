//! Gumbel box geometry.
//!
//! Words (or any entities) are represented as axis-aligned boxes whose corner
//! coordinates are location parameters of Gumbel random variables. Expected
//! intersection volumes under that noise model are smooth (softplus) functions
//! of the parameters, which gives useful gradients even for disjoint boxes.
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the default
//! `std` feature to use the platform math intrinsics instead of `libm`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod geometry;
pub mod math;

pub use geometry::{
    grad_score, intersect, log_expected_volume, score, score_with_grad, GumbelBox, GumbelParams,
    ScoreGrad,
};
pub use math::EULER_GAMMA;
