//! End-to-end compensation: one-time geometric + photometric calibration
//! against a capture oracle, then per-frame compensation that warps the
//! desired appearance into the projector frame and inverts the fitted
//! response. Also houses the surrogate recovery direction and the
//! prior-count ablation harness.

mod ablate;
mod bundle;
mod calibrate;
mod compensate;
mod surrogate;

pub use ablate::{ablate_priors, AblationRow, AblationTable};
pub use bundle::{CalibrationBundle, CalibrationMethod, CalibrationTiming};
pub use calibrate::{calibrate, calibrate_with, CalibrateOptions};
pub(crate) use calibrate::crop_flow;
pub use compensate::{compensate, evaluate_real, CompensationResult};
pub use surrogate::{surrogate_loss, surrogate_recover};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::imaging::{ImagingError, Raster};
use crate::metrics::MetricsError;
use crate::photometric::PhotometricError;
use crate::sim::{build_render_cache, render_capture_cached, RenderCache, SetupConfig, SimError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("camera sees no projector light; field of view is empty")]
    EmptyFov,
    #[error("bundle misalignment: {what}")]
    Misaligned { what: String },
    #[error("bad input: {what}")]
    BadInput { what: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Photometric(#[from] PhotometricError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Json { context: String, message: String },
}

/// A projector-camera loop: drive an image out, get a capture back.
///
/// Implementations must be stateless per call (same drive, same capture
/// distribution) so calibration bundles stay valid across frames and
/// concurrent compensation calls are safe.
pub trait ProjectCapture: Sync {
    fn projector_size(&self) -> (usize, usize);
    fn camera_size(&self) -> (usize, usize);
    fn capture(&self, drive: &Raster) -> Result<Raster, PipelineError>;
}

/// Synthetic stand-in for a physical rig: drives the forward simulator.
/// Sensor noise follows the setup's `noise_sigma` (zero disables it).
pub struct SimulatorRig {
    setup: SetupConfig,
    cache: RenderCache,
}

impl SimulatorRig {
    pub fn new(setup: SetupConfig) -> Result<Self, PipelineError> {
        let cache = build_render_cache(&setup)?;
        Ok(Self { setup, cache })
    }

    pub fn setup(&self) -> &SetupConfig {
        &self.setup
    }
}

impl ProjectCapture for SimulatorRig {
    fn projector_size(&self) -> (usize, usize) {
        self.setup.projector_size
    }

    fn camera_size(&self) -> (usize, usize) {
        self.setup.camera_size
    }

    fn capture(&self, drive: &Raster) -> Result<Raster, PipelineError> {
        let with_noise = self.setup.noise_sigma > 0.0;
        Ok(render_capture_cached(
            drive,
            &self.setup,
            &self.cache,
            with_noise,
        )?)
    }
}
