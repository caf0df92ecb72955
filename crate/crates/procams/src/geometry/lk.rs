use rayon::prelude::*;

use super::{FlowField, GeometryError};
use crate::imaging::Raster;

/// Tuning knobs for the coarse-to-fine flow estimator.
#[derive(Clone, Copy, Debug)]
pub struct FlowParams {
    /// Pyramid depth; the coarsest level is `2^(levels-1)` times smaller.
    pub levels: usize,
    /// Least-squares refinement steps per level.
    pub iters: usize,
    /// Square window side (odd) for the local constancy assumption.
    pub window: usize,
    /// Minimum eigenvalue of the window structure tensor, per pixel,
    /// below which the local system is too flat to trust.
    pub min_eig: f64,
    /// Updates larger than this (per level, in px) mark the pixel diverged.
    pub max_step: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 4,
            iters: 8,
            window: 7,
            min_eig: 1e-5,
            max_step: 8.0,
        }
    }
}

/// One grayscale pyramid level stored as f32 with f64 sampling.
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f32>,
}

impl Plane {
    fn from_raster(img: &Raster) -> Self {
        let lum = img.luma();
        Self {
            w: lum.width(),
            h: lum.height(),
            v: lum.samples().to_vec(),
        }
    }

    fn at(&self, x: isize, y: isize) -> f64 {
        let xi = x.clamp(0, self.w as isize - 1) as usize;
        let yi = y.clamp(0, self.h as isize - 1) as usize;
        self.v[yi * self.w + xi] as f64
    }

    /// Border-replicating bilinear lookup.
    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = x.floor() as isize;
        let y0 = y.floor() as isize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let a = self.at(x0, y0);
        let b = self.at(x0 + 1, y0);
        let c = self.at(x0, y0 + 1);
        let d = self.at(x0 + 1, y0 + 1);
        a * (1.0 - fx) * (1.0 - fy) + b * fx * (1.0 - fy) + c * (1.0 - fx) * fy + d * fx * fy
    }

    /// 5-tap binomial blur + 2x decimation.
    fn downsample(&self) -> Self {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let mut horiz = vec![0.0f64; self.w * self.h];
        for y in 0..self.h {
            for x in 0..self.w {
                let mut acc = 0.0;
                for (k, wgt) in K.iter().enumerate() {
                    acc += wgt * self.at(x as isize + k as isize - 2, y as isize);
                }
                horiz[y * self.w + x] = acc;
            }
        }
        let at_h = |x: isize, y: isize| -> f64 {
            let xi = x.clamp(0, self.w as isize - 1) as usize;
            let yi = y.clamp(0, self.h as isize - 1) as usize;
            horiz[yi * self.w + xi]
        };
        let (nw, nh) = ((self.w + 1) / 2, (self.h + 1) / 2);
        let mut v = vec![0.0f32; nw * nh];
        for y in 0..nh {
            for x in 0..nw {
                let mut acc = 0.0;
                for (k, wgt) in K.iter().enumerate() {
                    acc += wgt * at_h(2 * x as isize, 2 * y as isize + k as isize - 2);
                }
                v[y * nw + x] = acc as f32;
            }
        }
        Self { w: nw, h: nh, v }
    }

    fn gradients(&self) -> (Vec<f32>, Vec<f32>) {
        let mut gx = vec![0.0f32; self.w * self.h];
        let mut gy = vec![0.0f32; self.w * self.h];
        for y in 0..self.h {
            for x in 0..self.w {
                let (xi, yi) = (x as isize, y as isize);
                gx[y * self.w + x] = (0.5 * (self.at(xi + 1, yi) - self.at(xi - 1, yi))) as f32;
                gy[y * self.w + x] = (0.5 * (self.at(xi, yi + 1) - self.at(xi, yi - 1))) as f32;
            }
        }
        (gx, gy)
    }

    fn value_range(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &self.v {
            lo = lo.min(s as f64);
            hi = hi.max(s as f64);
        }
        hi - lo
    }
}

/// Estimate dense flow so that `warp(captured, flow) ≈ reference`.
///
/// `levels`/`iters` as in `FlowParams`; remaining knobs use defaults.
pub fn estimate_flow(
    captured: &Raster,
    reference: &Raster,
    levels: usize,
    iters: usize,
) -> Result<FlowField, GeometryError> {
    estimate_flow_with(
        captured,
        reference,
        FlowParams {
            levels,
            iters,
            ..FlowParams::default()
        },
    )
}

/// Coarse-to-fine dense Lucas-Kanade flow.
///
/// The field lives on the reference grid; each valid pixel p stores the
/// displacement into `captured`, refined over a Gaussian pyramid with the
/// estimate doubled between levels and accumulated across iterations.
/// Inputs must share dimensions and be photometrically comparable.
/// Untextured or diverging pixels come back invalid; fully degenerate
/// (constant) inputs yield an all-invalid field rather than an error.
pub fn estimate_flow_with(
    captured: &Raster,
    reference: &Raster,
    params: FlowParams,
) -> Result<FlowField, GeometryError> {
    if captured.dims() != reference.dims() {
        return Err(GeometryError::ShapeMismatch {
            a: captured.shape_string(),
            b: reference.shape_string(),
        });
    }
    if params.window < 3 || params.window % 2 == 0 || params.levels == 0 || params.iters == 0 {
        return Err(GeometryError::BadMask);
    }
    crate::init_thread_pool();
    let (w, h) = reference.dims();

    let mut cap_pyr = vec![Plane::from_raster(captured)];
    let mut ref_pyr = vec![Plane::from_raster(reference)];
    // Stop shrinking once a level can no longer hold the window.
    for _ in 1..params.levels {
        let top = ref_pyr.last().unwrap();
        if (top.w + 1) / 2 < params.window || (top.h + 1) / 2 < params.window {
            break;
        }
        ref_pyr.push(top.downsample());
        cap_pyr.push(cap_pyr.last().unwrap().downsample());
    }

    // Degenerate inputs carry no brightness-constancy signal at all.
    if ref_pyr[0].value_range() < 1e-6 || cap_pyr[0].value_range() < 1e-6 {
        return Ok(FlowField::invalid(w, h, captured.dims()));
    }

    let half = (params.window / 2) as isize;
    let mut dx: Vec<f32> = Vec::new();
    let mut dy: Vec<f32> = Vec::new();
    let mut ok: Vec<bool> = Vec::new();

    for level in (0..ref_pyr.len()).rev() {
        let rp = &ref_pyr[level];
        let cp = &cap_pyr[level];
        if level == ref_pyr.len() - 1 {
            dx = vec![0.0; rp.w * rp.h];
            dy = vec![0.0; rp.w * rp.h];
            ok = vec![true; rp.w * rp.h];
        }
        let (gx, gy) = rp.gradients();

        let rows: Vec<(Vec<f32>, Vec<f32>, Vec<bool>)> = (0..rp.h)
            .into_par_iter()
            .map(|y| {
                let mut rdx = vec![0.0f32; rp.w];
                let mut rdy = vec![0.0f32; rp.w];
                let mut rok = vec![false; rp.w];
                for x in 0..rp.w {
                    let i = y * rp.w + x;
                    if !ok[i] {
                        continue;
                    }
                    let (mut u, mut v) = (dx[i] as f64, dy[i] as f64);

                    // Structure tensor from reference gradients, fixed
                    // across iterations.
                    let (mut gxx, mut gxy, mut gyy) = (0.0f64, 0.0f64, 0.0f64);
                    for qy in -half..=half {
                        for qx in -half..=half {
                            let a = gx[(y as isize + qy).clamp(0, rp.h as isize - 1) as usize
                                * rp.w
                                + (x as isize + qx).clamp(0, rp.w as isize - 1) as usize]
                                as f64;
                            let b = gy[(y as isize + qy).clamp(0, rp.h as isize - 1) as usize
                                * rp.w
                                + (x as isize + qx).clamp(0, rp.w as isize - 1) as usize]
                                as f64;
                            gxx += a * a;
                            gxy += a * b;
                            gyy += b * b;
                        }
                    }
                    let n = (params.window * params.window) as f64;
                    let tr = gxx + gyy;
                    let det = gxx * gyy - gxy * gxy;
                    let lambda_min = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
                    if lambda_min / n < params.min_eig {
                        continue;
                    }

                    let mut diverged = false;
                    for _ in 0..params.iters {
                        let (mut bx, mut by) = (0.0f64, 0.0f64);
                        for qy in -half..=half {
                            for qx in -half..=half {
                                let sy = (y as isize + qy).clamp(0, rp.h as isize - 1);
                                let sx = (x as isize + qx).clamp(0, rp.w as isize - 1);
                                let r = rp.at(sx, sy);
                                let c = cp.bilinear(sx as f64 + u, sy as f64 + v);
                                let e = r - c;
                                bx += gx[sy as usize * rp.w + sx as usize] as f64 * e;
                                by += gy[sy as usize * rp.w + sx as usize] as f64 * e;
                            }
                        }
                        let du = (gyy * bx - gxy * by) / det;
                        let dv = (gxx * by - gxy * bx) / det;
                        if !(du.is_finite() && dv.is_finite())
                            || du.abs() > params.max_step
                            || dv.abs() > params.max_step
                        {
                            diverged = true;
                            break;
                        }
                        u += du;
                        v += dv;
                        if du.abs() < 1e-3 && dv.abs() < 1e-3 {
                            break;
                        }
                    }
                    if diverged || u.abs() > rp.w as f64 || v.abs() > rp.h as f64 {
                        continue;
                    }
                    rdx[x] = u as f32;
                    rdy[x] = v as f32;
                    rok[x] = true;
                }
                (rdx, rdy, rok)
            })
            .collect();
        for (y, (rdx, rdy, rok)) in rows.into_iter().enumerate() {
            dx[y * rp.w..(y + 1) * rp.w].copy_from_slice(&rdx);
            dy[y * rp.w..(y + 1) * rp.w].copy_from_slice(&rdy);
            ok[y * rp.w..(y + 1) * rp.w].copy_from_slice(&rok);
        }

        median3(&mut dx, &ok, rp.w, rp.h);
        median3(&mut dy, &ok, rp.w, rp.h);

        if level > 0 {
            // Promote the estimate to the finer grid, doubling vectors.
            let fp = &ref_pyr[level - 1];
            let mut ndx = vec![0.0f32; fp.w * fp.h];
            let mut ndy = vec![0.0f32; fp.w * fp.h];
            let mut nok = vec![true; fp.w * fp.h];
            let cdx = Plane {
                w: rp.w,
                h: rp.h,
                v: dx.clone(),
            };
            let cdy = Plane {
                w: rp.w,
                h: rp.h,
                v: dy.clone(),
            };
            for y in 0..fp.h {
                for x in 0..fp.w {
                    let (cx, cy) = (x as f64 * 0.5, y as f64 * 0.5);
                    ndx[y * fp.w + x] = (2.0 * cdx.bilinear(cx, cy)) as f32;
                    ndy[y * fp.w + x] = (2.0 * cdy.bilinear(cx, cy)) as f32;
                    let ci = (cy.round() as usize).min(rp.h - 1) * rp.w
                        + (cx.round() as usize).min(rp.w - 1);
                    nok[y * fp.w + x] = ok[ci];
                }
            }
            dx = ndx;
            dy = ndy;
            ok = nok;
        }
    }

    let mut flow = FlowField::invalid(w, h, captured.dims());
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if ok[i] {
                flow.set(x, y, dx[i], dy[i]);
            }
        }
    }
    Ok(flow)
}

/// 3x3 median over valid pixels, in place; isolated pixels keep their value.
fn median3(v: &mut [f32], ok: &[bool], w: usize, h: usize) {
    let src = v.to_vec();
    for y in 0..h {
        for x in 0..w {
            if !ok[y * w + x] {
                continue;
            }
            let mut vals: Vec<f32> = Vec::with_capacity(9);
            for qy in -1isize..=1 {
                for qx in -1isize..=1 {
                    let sy = y as isize + qy;
                    let sx = x as isize + qx;
                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                        continue;
                    }
                    let i = sy as usize * w + sx as usize;
                    if ok[i] {
                        vals.push(src[i]);
                    }
                }
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[y * w + x] = vals[vals.len() / 2];
        }
    }
}
