//! Image-quality metrics: PSNR, RMSE, SSIM, and CIEDE2000 color difference.
//!
//! All metrics accept an optional binary mask (1-channel raster, nonzero =
//! counted) and only read masked pixels, so identically masked inputs give
//! identical scores regardless of what lives outside the mask.

mod de00;
mod ssim;

pub use de00::{ciede2000, de00};
pub use ssim::{ssim, ssim_with, SsimParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::Raster;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {a} vs {b}")]
    ShapeMismatch { a: String, b: String },
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("image {width}x{height} smaller than the {window}-pixel window")]
    WindowTooLarge {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("mask must be single-channel with matching dims")]
    BadMask,
}

/// PSNR is reported on the [0,1] dynamic range and capped at 99 dB.
pub const PSNR_CAP_DB: f64 = 99.0;

/// RMSE below this floor reports the PSNR cap instead of a divergent log.
pub const PSNR_RMSE_FLOOR: f64 = 1e-5;

/// One row of quality numbers for a compared image pair.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricBlock {
    pub psnr: f64,
    pub rmse: f64,
    pub ssim: f64,
    pub de00_mean: f64,
    pub valid_pixel_count: usize,
}

impl MetricBlock {
    pub fn is_finite(&self) -> bool {
        self.psnr.is_finite()
            && self.rmse.is_finite()
            && self.ssim.is_finite()
            && self.de00_mean.is_finite()
    }
}

fn mask_lookup<'a>(
    mask: Option<&'a Raster>,
    dims: (usize, usize),
) -> Result<impl Fn(usize, usize) -> bool + 'a, MetricsError> {
    if let Some(m) = mask {
        if m.channels() != 1 || m.dims() != dims {
            return Err(MetricsError::BadMask);
        }
    }
    Ok(move |x: usize, y: usize| mask.map_or(true, |m| m.get(x, y, 0) > 0.5))
}

/// Masked RMSE over all channels and the matching PSNR.
///
/// PSNR = −20·log10(rmse), capped at [`PSNR_CAP_DB`] once the RMSE drops
/// below [`PSNR_RMSE_FLOOR`].
pub fn psnr_rmse(
    a: &Raster,
    b: &Raster,
    mask: Option<&Raster>,
) -> Result<(f64, f64), MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::ShapeMismatch {
            a: a.shape_string(),
            b: b.shape_string(),
        });
    }
    let in_mask = mask_lookup(mask, a.dims())?;
    let mut sum_sq = 0.0f64;
    let mut count = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if !in_mask(x, y) {
                continue;
            }
            for c in 0..a.channels() {
                let d = a.get(x, y, c) as f64 - b.get(x, y, c) as f64;
                sum_sq += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyMask);
    }
    let rmse = (sum_sq / count as f64).sqrt();
    Ok((psnr_from_rmse(rmse), rmse))
}

/// The PSNR that [`psnr_rmse`] reports for a given RMSE.
pub fn psnr_from_rmse(rmse: f64) -> f64 {
    if rmse < PSNR_RMSE_FLOOR {
        PSNR_CAP_DB
    } else {
        -20.0 * rmse.log10()
    }
}

/// Bundle PSNR/RMSE/SSIM/ΔE00 for a pair of unit-range rasters.
///
/// Images are interpreted as display-coded sRGB for the color-difference
/// term (decoded to linear RGB, then Lab); SSIM runs on Rec. 709 luma.
pub fn metric_block(
    a: &Raster,
    b: &Raster,
    mask: Option<&Raster>,
) -> Result<MetricBlock, MetricsError> {
    use crate::imaging::lab_image;
    let (psnr, rmse) = psnr_rmse(a, b, mask)?;
    let ssim_v = ssim(a, b, mask)?;
    let decode = |r: &Raster| r.map(crate::imaging::srgb_decode_clamped);
    let lab_a = lab_image(&decode(a));
    let lab_b = lab_image(&decode(b));
    let de = de00(&lab_a, &lab_b, mask)?;
    let count = match mask {
        Some(m) => m.samples().iter().filter(|&&v| v > 0.5).count(),
        None => a.width() * a.height(),
    };
    Ok(MetricBlock {
        psnr,
        rmse,
        ssim: ssim_v,
        de00_mean: de.mean,
        valid_pixel_count: count,
    })
}
