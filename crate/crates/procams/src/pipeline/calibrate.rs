use std::cell::Cell;
use std::time::Instant;

use super::{
    CalibrationBundle, CalibrationMethod, CalibrationTiming, PipelineError, ProjectCapture,
};
use crate::geometry::{
    estimate_flow_with, fit_optimal_affine, graycode_decode, graycode_patterns, invert_flow,
    mask_bbox, max_inscribed_rect, warp, FlowField, FlowParams, GeometryError,
};
use crate::imaging::{resample_bilinear, Raster};
use crate::photometric::{fit_from_priors, levels_for_k, SurfacePriorSet};
use crate::sim::FOV_TAU;

#[derive(Clone, Debug)]
pub struct CalibrateOptions {
    pub method: CalibrationMethod,
    /// Number of gray probe levels for the photometric fit (1, 3, or 5).
    pub k: usize,
    /// Fit the desired-target affine preserving the input aspect ratio.
    pub preserve_aspect: bool,
    /// Parameters for the optical-flow route; ignored by Gray code.
    pub flow_params: FlowParams,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self {
            method: CalibrationMethod::Graycode,
            k: 5,
            preserve_aspect: true,
            flow_params: FlowParams::default(),
        }
    }
}

/// One-time geometric + photometric calibration through a capture oracle.
pub fn calibrate(
    rig: &dyn ProjectCapture,
    method: CalibrationMethod,
    k: usize,
) -> Result<CalibrationBundle, PipelineError> {
    calibrate_with(
        rig,
        &CalibrateOptions {
            method,
            k,
            ..CalibrateOptions::default()
        },
    )
}

/// Counts captures and the wall time spent inside the oracle.
struct TimedRig<'a> {
    rig: &'a dyn ProjectCapture,
    count: Cell<usize>,
    ms: Cell<f64>,
}

impl<'a> TimedRig<'a> {
    fn capture(&self, drive: &Raster) -> Result<Raster, PipelineError> {
        let t = Instant::now();
        let out = self.rig.capture(drive)?;
        self.ms.set(self.ms.get() + t.elapsed().as_secs_f64() * 1e3);
        self.count.set(self.count.get() + 1);
        Ok(out)
    }
}

/// Textured reference projected by the flow route: oblique multi-frequency
/// sinusoids with strong gradients everywhere (periods of roughly 25-60 px,
/// the band the pyramid tracker locks onto best) and values safely inside
/// the gamut.
pub(crate) fn flow_reference(w: usize, h: usize) -> Raster {
    Raster::from_fn(w, h, 3, |x, y| {
        let u = x as f64;
        let v = y as f64;
        let s = 0.5
            + 0.16 * (0.19 * u + 0.07 * v).sin()
            + 0.13 * (0.05 * u - 0.23 * v).cos()
            + 0.1 * (0.11 * (u + v) + 1.0).sin();
        [
            (s * 0.95).clamp(0.05, 0.95) as f32,
            s.clamp(0.05, 0.95) as f32,
            (s * 0.9).clamp(0.05, 0.95) as f32,
        ]
    })
    .expect("projector dims are valid")
}

/// Lit-region mask from raw white / black captures: Rec. 709 luma of the
/// captured difference above the field-of-view threshold.
fn fov_mask_from_captures(white: &Raster, black: &Raster) -> Result<Raster, PipelineError> {
    let dw = white.luma();
    let db = black.luma();
    Ok(dw.zip_map(&db, |w, b| {
        if (w - b) as f64 > FOV_TAU {
            1.0
        } else {
            0.0
        }
    })?)
}

/// Restrict a camera-grid flow field to the crop window; displacements
/// gain the crop offset so targets stay absolute in the source frame.
pub(crate) fn crop_flow(field: &FlowField, off: (usize, usize), size: (usize, usize)) -> FlowField {
    let mut out = FlowField::invalid(size.0, size.1, field.source_size());
    for y in 0..size.1 {
        for x in 0..size.0 {
            if let Some((dx, dy)) = field.get(x + off.0, y + off.1) {
                out.set(x, y, dx + off.0 as f32, dy + off.1 as f32);
            }
        }
    }
    out
}

pub fn calibrate_with(
    rig: &dyn ProjectCapture,
    opts: &CalibrateOptions,
) -> Result<CalibrationBundle, PipelineError> {
    let t0 = Instant::now();
    let levels = levels_for_k(opts.k).ok_or_else(|| PipelineError::BadInput {
        what: format!("unsupported prior count {}", opts.k),
    })?;
    let proj = rig.projector_size();
    let cam = rig.camera_size();
    let timed = TimedRig {
        rig,
        count: Cell::new(0),
        ms: Cell::new(0.0),
    };

    let white_drive = Raster::constant(proj.0, proj.1, 3, 1.0)?;
    let black_drive = Raster::constant(proj.0, proj.1, 3, 0.0)?;
    let white = timed.capture(&white_drive)?;
    let black = timed.capture(&black_drive)?;
    if white.dims() != cam || black.dims() != cam {
        return Err(PipelineError::Misaligned {
            what: "oracle captures are not camera-sized".into(),
        });
    }
    let mask_full = fov_mask_from_captures(&white, &black)?;
    let bbox = match mask_bbox(&mask_full) {
        Ok(r) => r,
        Err(GeometryError::EmptyMask) => return Err(PipelineError::EmptyFov),
        Err(e) => return Err(e.into()),
    };
    let off = (bbox.x, bbox.y);
    let bsize = (bbox.w, bbox.h);
    let camera_mask = mask_full.crop(off.0, off.1, bsize.0, bsize.1)?;

    // Gray probes; level 0 and 255 reuse the masking captures.
    let mut prior_caps: Vec<(u8, Raster)> = Vec::new();
    let mut prior128: Option<Raster> = None;
    for &level in levels {
        let cap = match level {
            0 => black.clone(),
            255 => white.clone(),
            _ => {
                let drive = Raster::constant(proj.0, proj.1, 3, level as f32 / 255.0)?;
                timed.capture(&drive)?
            }
        };
        if level == 128 {
            prior128 = Some(cap.clone());
        }
        prior_caps.push((level, cap));
    }

    // Correspondence field on P pointing into B, plus its inverse.
    let (flow, back_flow, projector_mask) = match opts.method {
        CalibrationMethod::Graycode => {
            let patterns = graycode_patterns(proj.0, proj.1)?;
            let mut captures = Vec::with_capacity(patterns.len());
            captures.push(white.clone());
            captures.push(black.clone());
            for pat in &patterns[2..] {
                captures.push(timed.capture(pat)?);
            }
            let decoded = graycode_decode(&captures, &mask_full, proj)?;
            let mut back = crop_flow(&decoded, off, bsize);
            let inv = invert_flow(&back)?;
            let mut omega = inv.flow;
            let mask = omega.mask_raster();
            omega.fill_invalid_nearest()?;
            back.fill_invalid_nearest()?;
            (omega, back, mask)
        }
        CalibrationMethod::Flow => {
            let p128 = match &prior128 {
                Some(c) => c.clone(),
                None => {
                    let drive = Raster::constant(proj.0, proj.1, 3, 128.0 / 255.0)?;
                    timed.capture(&drive)?
                }
            };
            let reference = flow_reference(proj.0, proj.1);
            let captured_ref = timed.capture(&reference)?;
            // Photometric normalization: both sides relative to the
            // mid-gray response, softening brightness-constancy breakage
            // from texture and shading.
            let c_norm = captured_ref
                .crop(off.0, off.1, bsize.0, bsize.1)?
                .zip_map(&p128.crop(off.0, off.1, bsize.0, bsize.1)?, |v, p| {
                    v / p.max(1e-3)
                })?;
            let r_norm = resample_bilinear(&reference, bsize.0, bsize.1)?
                .map(|v| v * (255.0 / 128.0));
            let mut field = estimate_flow_with(&c_norm, &r_norm, opts.flow_params)?;
            // The crop hugs the lit region, so windows that touch the crop
            // border (or any unlit pixel) saw normalization junk; drop them
            // before transferring rather than pass biased vectors along.
            let band = opts.flow_params.window as isize / 2 + 1;
            for y in 0..bsize.1 {
                for x in 0..bsize.0 {
                    let mut tainted = false;
                    'scan: for qy in -band..=band {
                        for qx in -band..=band {
                            let sx = x as isize + qx;
                            let sy = y as isize + qy;
                            if sx < 0
                                || sy < 0
                                || sx >= bsize.0 as isize
                                || sy >= bsize.1 as isize
                                || camera_mask.get(sx as usize, sy as usize, 0) < 0.5
                            {
                                tainted = true;
                                break 'scan;
                            }
                        }
                    }
                    if tainted {
                        field.set_invalid(x, y);
                    }
                }
            }
            // Verify brightness constancy at the solution: vectors that
            // diverged landed on unrelated content and show residuals far
            // above the aliasing floor, so gate on a robust multiple of the
            // median residual.
            let c_l = c_norm.luma();
            let r_l = r_norm.luma();
            let mut residuals = Vec::with_capacity(bsize.0 * bsize.1);
            for y in 0..bsize.1 {
                for x in 0..bsize.0 {
                    if let Some((dx, dy)) = field.get(x, y) {
                        let r = match c_l.sample_bilinear(x as f32 + dx, y as f32 + dy) {
                            Some(v) => (v[0] - r_l.get(x, y, 0)).abs(),
                            None => f32::INFINITY,
                        };
                        residuals.push((x, y, r));
                    }
                }
            }
            let mut sorted: Vec<f32> = residuals
                .iter()
                .map(|&(_, _, r)| r)
                .filter(|r| r.is_finite())
                .collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if !sorted.is_empty() {
                let tau = (5.0 * sorted[sorted.len() / 2]).max(0.05);
                for (x, y, r) in residuals {
                    if r > tau {
                        field.set_invalid(x, y);
                    }
                }
            }
            // Transfer from the resampled reference grid onto P
            // (corner-aligned axis mapping, same as the resample).
            let sx = if proj.0 > 1 {
                (bsize.0 as f32 - 1.0) / (proj.0 as f32 - 1.0)
            } else {
                0.0
            };
            let sy = if proj.1 > 1 {
                (bsize.1 as f32 - 1.0) / (proj.1 as f32 - 1.0)
            } else {
                0.0
            };
            let mut omega = FlowField::invalid(proj.0, proj.1, bsize);
            for py in 0..proj.1 {
                for px in 0..proj.0 {
                    let u = px as f32 * sx;
                    let v = py as f32 * sy;
                    if let Some((dx, dy)) = field.sample(u, v) {
                        omega.set(px, py, u + dx - px as f32, v + dy - py as f32);
                    }
                }
            }
            let mask = omega.mask_raster();
            if omega.valid_count() == 0 {
                return Err(PipelineError::EmptyFov);
            }
            omega.fill_invalid_nearest()?;
            let inv = invert_flow(&omega)?;
            let mut back = inv.flow;
            back.fill_invalid_nearest()?;
            (omega, back, mask)
        }
    };

    // Probe captures cropped and pulled onto the projector grid.
    let mut warped = Vec::with_capacity(prior_caps.len());
    let mut level_list = Vec::with_capacity(prior_caps.len());
    for (level, cap) in &prior_caps {
        let cropped = cap.crop(off.0, off.1, bsize.0, bsize.1)?;
        warped.push(warp(&cropped, &flow)?);
        level_list.push(*level);
    }
    let priors_warped = SurfacePriorSet::new(level_list, warped)?;
    let model = fit_from_priors(&priors_warped)?;

    let rect = max_inscribed_rect(&camera_mask)?;
    let affine = fit_optimal_affine(rect, proj, opts.preserve_aspect);

    let total_ms = t0.elapsed().as_secs_f64() * 1e3;
    let capture_ms = timed.ms.get();
    let bundle = CalibrationBundle {
        method: opts.method,
        camera_size: cam,
        projector_size: proj,
        crop_offset: off,
        crop_size: bsize,
        camera_mask,
        projector_mask,
        flow,
        back_flow,
        rect,
        affine,
        priors_warped,
        model,
        timing: CalibrationTiming {
            captures: timed.count.get(),
            capture_ms,
            solve_ms: total_ms - capture_ms,
            total_ms,
        },
    };
    bundle.check_aligned()?;
    Ok(bundle)
}
