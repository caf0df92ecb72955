use std::time::Instant;

use super::{CalibrationBundle, PipelineError, ProjectCapture};
use crate::geometry::warp;
use crate::imaging::Raster;
use crate::metrics::{metric_block, MetricBlock};
use crate::photometric::{apply_forward, apply_pseudo_inverse, ClipReport};

/// Output of one compensation pass.
#[derive(Clone, Debug)]
pub struct CompensationResult {
    /// Compensation image on the projector grid, in `[0, 1]`.
    pub drive: Raster,
    /// Model-predicted appearance of the drive, on the crop grid.
    pub predicted_capture: Raster,
    /// Desired appearance (input fitted into the inscribed rectangle).
    pub desired: Raster,
    /// Actual capture of the drive, cropped; present after `evaluate_real`.
    pub captured: Option<Raster>,
    /// Quality of `captured` (or of the prediction when never projected)
    /// against `desired`, over the inscribed rectangle.
    pub metrics: MetricBlock,
    /// Same metrics for projecting the input unmodified.
    pub baseline: Option<MetricBlock>,
    pub clip: ClipReport,
    pub wall_ms: f64,
}

/// Desired appearance: the input image mapped through the bundle's affine
/// into the inscribed rectangle, black outside it.
fn desired_target(x: &Raster, bundle: &CalibrationBundle) -> Raster {
    let x = x.to_rgb();
    let (pw, ph) = bundle.projector_size;
    let (bw, bh) = bundle.crop_size;
    Raster::from_fn(bw, bh, 3, |bx, by| {
        if !bundle.rect.contains(bx, by) {
            return [0.0; 3];
        }
        let (px, py) = bundle.affine.apply_inverse(bx as f64, by as f64);
        let sx = (px as f32).clamp(0.0, (pw - 1) as f32);
        let sy = (py as f32).clamp(0.0, (ph - 1) as f32);
        x.sample_bilinear(sx, sy)
            .expect("clamped coordinates are inside the frame")
    })
    .expect("crop dims are valid")
}

/// Compute the compensation image for `x` and predict its appearance,
/// without projecting anything.
///
/// The desired target is warped onto the projector grid through the
/// bundle flow, then pushed backward through the photometric model. The
/// metric block compares the model's predicted capture against the
/// desired target over the inscribed rectangle.
pub fn compensate(
    x: &Raster,
    bundle: &CalibrationBundle,
) -> Result<CompensationResult, PipelineError> {
    let t0 = Instant::now();
    bundle.check_aligned()?;
    if x.dims() != bundle.projector_size {
        return Err(PipelineError::Misaligned {
            what: format!(
                "input is {}, projector frame is {}x{}",
                x.shape_string(),
                bundle.projector_size.0,
                bundle.projector_size.1
            ),
        });
    }
    let desired = desired_target(x, bundle);
    let target_p = warp(&desired, &bundle.flow)?;
    let (drive, clip) = apply_pseudo_inverse(&bundle.model, &target_p)?;
    let predicted_p = apply_forward(&bundle.model, &drive)?;
    let predicted_capture = warp(&predicted_p, &bundle.back_flow)?;
    let rmask = bundle.rect_mask();
    let metrics = metric_block(&predicted_capture, &desired, Some(&rmask))?;
    Ok(CompensationResult {
        drive,
        predicted_capture,
        desired,
        captured: None,
        metrics,
        baseline: None,
        clip,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

/// Project the compensation through the capture oracle and score the real
/// capture against the desired target; also scores the uncompensated
/// baseline (projecting `x` unmodified).
pub fn evaluate_real(
    x: &Raster,
    bundle: &CalibrationBundle,
    rig: &dyn ProjectCapture,
) -> Result<CompensationResult, PipelineError> {
    let mut result = compensate(x, bundle)?;
    let t0 = Instant::now();
    let (off, size) = (bundle.crop_offset, bundle.crop_size);
    let rmask = bundle.rect_mask();

    let captured = rig.capture(&result.drive)?;
    let captured_b = captured.crop(off.0, off.1, size.0, size.1)?;
    result.metrics = metric_block(&captured_b, &result.desired, Some(&rmask))?;

    let raw = rig.capture(&x.to_rgb())?;
    let raw_b = raw.crop(off.0, off.1, size.0, size.1)?;
    result.baseline = Some(metric_block(&raw_b, &result.desired, Some(&rmask))?);

    result.captured = Some(captured_b);
    result.wall_ms += t0.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}
