use super::{CalibrationBundle, PipelineError};
use crate::geometry::warp;
use crate::imaging::Raster;
use crate::metrics::ssim;
use crate::photometric::apply_pseudo_inverse;

/// Recover the projector input that produced a cropped capture: pull the
/// capture onto the projector grid through the bundle flow, then look the
/// drive up through the inverse response. Inverse direction of
/// [`compensate`](super::compensate) — maps captures back to inputs.
pub fn surrogate_recover(
    x_tilde: &Raster,
    bundle: &CalibrationBundle,
) -> Result<Raster, PipelineError> {
    bundle.check_aligned()?;
    if x_tilde.dims() != bundle.crop_size {
        return Err(PipelineError::Misaligned {
            what: format!(
                "capture is {}, crop frame is {}x{}",
                x_tilde.shape_string(),
                bundle.crop_size.0,
                bundle.crop_size.1
            ),
        });
    }
    let on_p = warp(&x_tilde.to_rgb(), &bundle.flow)?;
    let (drive, _clip) = apply_pseudo_inverse(&bundle.model, &on_p)?;
    Ok(drive)
}

/// Reconstruction objective: mean absolute difference plus one minus
/// structural similarity, equally weighted.
pub fn surrogate_loss(x_hat: &Raster, x: &Raster) -> Result<f64, PipelineError> {
    if x_hat.dims() != x.dims() || x_hat.channels() != x.channels() {
        return Err(PipelineError::Misaligned {
            what: format!("{} vs {}", x_hat.shape_string(), x.shape_string()),
        });
    }
    let l1 = x_hat.mean_abs_diff(x)?;
    let s = ssim(x_hat, x, None)?;
    Ok(l1 + (1.0 - s))
}
