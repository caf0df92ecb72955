//! Synthetic projector-camera rig.
//!
//! A capture of drive image x is formed in linear light:
//!
//! ```text
//! capture(q) = clamp(((M . x^gp)[src(q)] + E) * rho(q))^(1/gc) (+ noise)
//! ```
//!
//! where `src(q)` is the projector pixel illuminating camera pixel q under
//! the geometric warp (nearest-pixel optics: each camera sample sees
//! exactly one discrete projector pixel), `M` the global channel-mixing
//! matrix, `gp`/`gc` the projector and camera gammas (the camera encodes,
//! so gc = 1 is a radiometrically linear sensor), `E` the ambient radiance
//! and `rho` the per-pixel surface albedo. Ambient light reflects off the
//! surface, so it is attenuated by the albedo too. Pixels no projector
//! pixel reaches see only the ambient term. Noise is Gaussian on the
//! encoded values, seeded and reproducible.

mod config;
mod render;
mod warp;

pub use config::SetupConfig;
pub use render::{
    build_render_cache, capture_surface_prior, render_capture, render_capture_cached,
    render_fov_masks, true_correspondence, true_flow, FovMasks, RenderCache, FOV_TAU,
};
pub use warp::{
    DisplacementField, GeometryWarp, Mat3, WaveTerm, MAX_DISPLACEMENT_GRADIENT,
};

use thiserror::Error;

use crate::imaging::ImagingError;

/// Admissible uniform gray drive levels for surface probing.
pub const PRIOR_LEVELS: [u8; 5] = [0, 64, 128, 191, 255];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid setup: {what}")]
    InvalidConfig { what: String },
    #[error("image shape {got} does not match the {expected} frame")]
    SizeMismatch { got: String, expected: String },
    #[error("geometric warp folds or leaves the camera frame; not injective over the projector frame")]
    NonInjective,
    #[error("surface prior level {level} not one of {PRIOR_LEVELS:?}")]
    PriorLevel { level: u8 },
    #[error("setup document {context}: {message}")]
    Doc { context: String, message: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}
