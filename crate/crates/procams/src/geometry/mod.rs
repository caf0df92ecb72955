//! Geometric calibration: flow fields and backward warping, Gray-code
//! structured light, classical coarse-to-fine optical flow, and the
//! crop / inscribed-rectangle / affine fitting used to frame outputs.
//!
//! Flow convention (fixed here, enforced by the simulator oracles): a
//! [`FlowField`] lives on its *output* grid and backward-warps, i.e.
//! `warp(img, flow)` writes at pixel `p` the source image sampled at
//! `p + flow(p)`. The frame the vectors point into is recorded as
//! `source_size` and checked at warp time.

mod flow;
mod graycode;
mod lk;
mod rect;

pub use flow::{invert_flow, warp, warp_with_mask, EpeStats, FlowField, FlowInversion};
pub use graycode::{graycode_decode, graycode_patterns, TAU_BIT};
pub use lk::{estimate_flow, estimate_flow_with, FlowParams};
pub use rect::{
    crop_to_bbox, fit_optimal_affine, mask_bbox, max_inscribed_rect, AffineMap, Rect,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("flow targets a {expected_w}x{expected_h} source but image is {got_w}x{got_h}")]
    FrameMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("images disagree: {a} vs {b}")]
    ShapeMismatch { a: String, b: String },
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("mask must be single-channel and match the image dims")]
    BadMask,
    #[error("flow field has no valid pixels")]
    AllInvalid,
    #[error("capture sequence holds {got} frames, expected {expected}")]
    SequenceLength { got: usize, expected: usize },
    #[error("projector dims {width}x{height} too small for coded patterns")]
    PatternDims { width: usize, height: usize },
    #[error("no overlapping valid pixels between flow fields")]
    NoOverlap,
    #[error("imaging: {0}")]
    Imaging(#[from] crate::imaging::ImagingError),
}
