//! Photometric response fitting and inversion.
//!
//! A handful of uniform gray probe captures ("surface priors") sample the
//! scene's per-pixel response to projector drive. From them this module
//! fits either a single gain (one probe) or a monotone piecewise-linear
//! curve per pixel and channel (three or five probes), inverts the fit to
//! compute compensation drive images, optionally models global channel
//! crosstalk, and provides the classical capture-feedback refinement loop.

mod mixing;
mod model;
mod nayar;

pub use mixing::{fit_mixing_matrix, MixingFit, PROBE_DRIVES};
pub use model::{
    apply_forward, apply_pseudo_inverse, fit_from_priors, ClipReport, PhotometricModel,
    ResponseMode, FLAT_EPS,
};
pub use nayar::{nayar_refine, nayar_refine_values, NayarOutcome, NayarParams};

use thiserror::Error;

use crate::imaging::{ImagingError, Raster};
use crate::sim::PRIOR_LEVELS;

/// Probe drive levels for each supported prior count.
pub fn levels_for_k(k: usize) -> Option<&'static [u8]> {
    match k {
        1 => Some(&[64]),
        3 => Some(&[0, 128, 255]),
        5 => Some(&PRIOR_LEVELS),
        _ => None,
    }
}

#[derive(Debug, Error)]
pub enum PhotometricError {
    #[error("bad surface priors: {what}")]
    BadPriors { what: String },
    #[error("prior images disagree in shape: {a} vs {b}")]
    Misaligned { a: String, b: String },
    #[error("image shape {got} does not match the model's {expected}")]
    ModelShape { got: String, expected: String },
    #[error("mixing fit needs >= 4 probes, got {got}")]
    NeedProbes { got: usize },
    #[error("probe set is rank-deficient; drives do not span the color cube")]
    RankDeficient,
    #[error("every pixel's response is flat; nothing to invert")]
    AllFlat,
    #[error("capture failed during refinement: {message}")]
    Capture { message: String },
    #[error("refinement diverged after {iterations} captures; residual rose to {last:.5}")]
    Diverged { iterations: usize, last: f64 },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// K aligned captures of uniform gray probes at the canonical drive levels.
#[derive(Clone, Debug)]
pub struct SurfacePriorSet {
    levels: Vec<u8>,
    priors: Vec<Raster>,
}

impl SurfacePriorSet {
    /// `priors[i]` must be the capture of a uniform `levels[i]` projection;
    /// the level set must be exactly the canonical set for its size.
    pub fn new(levels: Vec<u8>, priors: Vec<Raster>) -> Result<Self, PhotometricError> {
        let canonical = levels_for_k(levels.len()).ok_or_else(|| PhotometricError::BadPriors {
            what: format!("{} priors; supported counts are 1, 3, 5", levels.len()),
        })?;
        if levels != canonical {
            return Err(PhotometricError::BadPriors {
                what: format!("levels {levels:?} must be exactly {canonical:?}"),
            });
        }
        if priors.len() != levels.len() {
            return Err(PhotometricError::BadPriors {
                what: format!("{} levels but {} images", levels.len(), priors.len()),
            });
        }
        let first = &priors[0];
        for p in &priors {
            if p.dims() != first.dims() || p.channels() != first.channels() {
                return Err(PhotometricError::Misaligned {
                    a: first.shape_string(),
                    b: p.shape_string(),
                });
            }
            if let Some(idx) = p.samples().iter().position(|v| !v.is_finite()) {
                return Err(PhotometricError::BadPriors {
                    what: format!("non-finite prior sample at index {idx}"),
                });
            }
        }
        Ok(Self { levels, priors })
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn priors(&self) -> &[Raster] {
        &self.priors
    }

    pub fn prior_at(&self, level: u8) -> Option<&Raster> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .map(|i| &self.priors[i])
    }

    pub fn dims(&self) -> (usize, usize) {
        self.priors[0].dims()
    }

    pub fn channels(&self) -> usize {
        self.priors[0].channels()
    }
}
