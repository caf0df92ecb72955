use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::imaging::{read_pfm, write_pfm, Raster};

/// Dense backward-warp displacement field.
///
/// Defined on a `width x height` output grid; pixel `p` pulls from position
/// `p + flow(p)` in a `source_size` frame. Invalid pixels carry NaN vectors.
#[derive(Clone, Debug)]
pub struct FlowField {
    width: usize,
    height: usize,
    dx: Vec<f32>,
    dy: Vec<f32>,
    valid: Vec<bool>,
    source_size: (usize, usize),
}

/// Mean / max end-point error between two flow fields.
#[derive(Clone, Copy, Debug)]
pub struct EpeStats {
    pub mean: f64,
    pub max: f64,
    pub compared: usize,
}

impl FlowField {
    /// All-zero, all-valid field (identity warp when source matches grid).
    pub fn zero(width: usize, height: usize, source_size: (usize, usize)) -> Self {
        Self {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
            valid: vec![true; width * height],
            source_size,
        }
    }

    /// All-invalid field (vectors NaN).
    pub fn invalid(width: usize, height: usize, source_size: (usize, usize)) -> Self {
        Self {
            width,
            height,
            dx: vec![f32::NAN; width * height],
            dy: vec![f32::NAN; width * height],
            valid: vec![false; width * height],
            source_size,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn source_size(&self) -> (usize, usize) {
        self.source_size
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// Displacement at a valid pixel; `None` when masked out.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<(f32, f32)> {
        let i = y * self.width + x;
        if self.valid[i] {
            Some((self.dx[i], self.dy[i]))
        } else {
            None
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, dx: f32, dy: f32) {
        let i = y * self.width + x;
        self.dx[i] = dx;
        self.dy[i] = dy;
        self.valid[i] = true;
    }

    #[inline]
    pub fn set_invalid(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.dx[i] = f32::NAN;
        self.dy[i] = f32::NAN;
        self.valid[i] = false;
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Binary raster of the validity mask (1 = valid).
    pub fn mask_raster(&self) -> Raster {
        let samples = self
            .valid
            .iter()
            .map(|&v| if v { 1.0 } else { 0.0 })
            .collect();
        Raster::from_samples(self.width, self.height, 1, samples).expect("valid dims")
    }

    /// Bilinear displacement sample at continuous grid coordinates; requires
    /// all four touched pixels valid.
    pub fn sample(&self, x: f32, y: f32) -> Option<(f32, f32)> {
        let wm = (self.width - 1) as f32;
        let hm = (self.height - 1) as f32;
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 || x > wm || y > hm {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        for (cx, cy) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
            if !self.is_valid(cx, cy) {
                return None;
            }
        }
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let lerp2 = |v00: f32, v10: f32, v01: f32, v11: f32| {
            let top = v00 + (v10 - v00) * fx;
            let bot = v01 + (v11 - v01) * fx;
            top + (bot - top) * fy
        };
        let i = |xx: usize, yy: usize| yy * self.width + xx;
        Some((
            lerp2(
                self.dx[i(x0, y0)],
                self.dx[i(x1, y0)],
                self.dx[i(x0, y1)],
                self.dx[i(x1, y1)],
            ),
            lerp2(
                self.dy[i(x0, y0)],
                self.dy[i(x1, y0)],
                self.dy[i(x0, y1)],
                self.dy[i(x1, y1)],
            ),
        ))
    }

    /// Mean/max end-point error versus another field over the pixels valid
    /// in both. Grids must match.
    pub fn epe_vs(&self, other: &FlowField) -> Result<EpeStats, GeometryError> {
        if self.dims() != other.dims() {
            return Err(GeometryError::ShapeMismatch {
                a: format!("{}x{}", self.width, self.height),
                b: format!("{}x{}", other.width, other.height),
            });
        }
        let mut sum = 0.0f64;
        let mut max = 0.0f64;
        let mut n = 0usize;
        for i in 0..self.valid.len() {
            if self.valid[i] && other.valid[i] {
                let ex = self.dx[i] as f64 - other.dx[i] as f64;
                let ey = self.dy[i] as f64 - other.dy[i] as f64;
                let e = (ex * ex + ey * ey).sqrt();
                sum += e;
                max = max.max(e);
                n += 1;
            }
        }
        if n == 0 {
            return Err(GeometryError::NoOverlap);
        }
        Ok(EpeStats {
            mean: sum / n as f64,
            max,
            compared: n,
        })
    }

    /// Replace every invalid vector with its nearest valid neighbor's
    /// (4-connected breadth-first, deterministic row-major seeding).
    /// Returns the number of filled pixels. Filled pixels become valid for
    /// warping even though they were never measured.
    pub fn fill_invalid_nearest(&mut self) -> Result<usize, GeometryError> {
        if self.valid.iter().all(|&v| !v) {
            return Err(GeometryError::AllInvalid);
        }
        let mut known = self.valid.clone();
        let mut queue: VecDeque<usize> =
            (0..known.len()).filter(|&i| known[i]).collect();
        let mut filled = 0usize;
        while let Some(i) = queue.pop_front() {
            let x = i % self.width;
            let y = i / self.width;
            let (vx, vy) = (self.dx[i], self.dy[i]);
            let mut neighbors = [None; 4];
            if x > 0 {
                neighbors[0] = Some(i - 1);
            }
            if x + 1 < self.width {
                neighbors[1] = Some(i + 1);
            }
            if y > 0 {
                neighbors[2] = Some(i - self.width);
            }
            if y + 1 < self.height {
                neighbors[3] = Some(i + self.width);
            }
            for j in neighbors.into_iter().flatten() {
                if !known[j] {
                    known[j] = true;
                    self.dx[j] = vx;
                    self.dy[j] = vy;
                    self.valid[j] = true;
                    filled += 1;
                    queue.push_back(j);
                }
            }
        }
        Ok(filled)
    }

    pub fn max_magnitude(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.valid.len() {
            if self.valid[i] {
                let v = (self.dx[i] as f64).hypot(self.dy[i] as f64);
                m = m.max(v);
            }
        }
        m
    }

    /// Serialize as a 3-channel PFM (dx, dy, validity) plus a JSON sidecar
    /// describing the convention and frames.
    pub fn save(&self, pfm_path: &Path) -> Result<(), GeometryError> {
        let mut samples = Vec::with_capacity(self.width * self.height * 3);
        for i in 0..self.width * self.height {
            if self.valid[i] {
                samples.extend_from_slice(&[self.dx[i], self.dy[i], 1.0]);
            } else {
                samples.extend_from_slice(&[0.0, 0.0, 0.0]);
            }
        }
        let raster = Raster::from_samples(self.width, self.height, 3, samples)?;
        write_pfm(&raster, pfm_path)?;
        let sidecar = FlowSidecar {
            convention: CONVENTION.to_string(),
            width: self.width,
            height: self.height,
            source_width: self.source_size.0,
            source_height: self.source_size.1,
            valid_fraction: self.valid_fraction(),
            max_magnitude: self.max_magnitude(),
        };
        let json_path = pfm_path.with_extension("json");
        let body = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        std::fs::write(&json_path, body).map_err(|e| {
            GeometryError::Imaging(crate::imaging::ImagingError::Io {
                context: format!("writing {}", json_path.display()),
                source: e,
            })
        })
    }

    /// Load a field saved by [`FlowField::save`].
    pub fn load(pfm_path: &Path) -> Result<Self, GeometryError> {
        let raster = read_pfm(pfm_path)?;
        let json_path = pfm_path.with_extension("json");
        let body = std::fs::read_to_string(&json_path).map_err(|e| {
            GeometryError::Imaging(crate::imaging::ImagingError::Io {
                context: format!("reading {}", json_path.display()),
                source: e,
            })
        })?;
        let sidecar: FlowSidecar = serde_json::from_str(&body).map_err(|e| {
            GeometryError::Imaging(crate::imaging::ImagingError::Pfm {
                context: format!("parsing {}", json_path.display()),
                message: e.to_string(),
            })
        })?;
        let (w, h) = raster.dims();
        let mut flow = FlowField::invalid(w, h, (sidecar.source_width, sidecar.source_height));
        for y in 0..h {
            for x in 0..w {
                let px = raster.pixel(x, y);
                if px[2] > 0.5 {
                    flow.set(x, y, px[0], px[1]);
                }
            }
        }
        Ok(flow)
    }
}

const CONVENTION: &str = "backward: output pixel p samples source at p + flow(p)";

#[derive(Serialize, Deserialize)]
struct FlowSidecar {
    convention: String,
    width: usize,
    height: usize,
    source_width: usize,
    source_height: usize,
    valid_fraction: f64,
    max_magnitude: f64,
}

/// Backward-warp `img` by `flow`; invalid or out-of-source pixels become 0.
pub fn warp(img: &Raster, flow: &FlowField) -> Result<Raster, GeometryError> {
    warp_with_mask(img, flow).map(|(r, _)| r)
}

/// Backward-warp returning both the image and the mask of pixels that
/// sampled successfully (flow valid and source position in bounds).
pub fn warp_with_mask(
    img: &Raster,
    flow: &FlowField,
) -> Result<(Raster, Raster), GeometryError> {
    if img.dims() != flow.source_size {
        return Err(GeometryError::FrameMismatch {
            expected_w: flow.source_size.0,
            expected_h: flow.source_size.1,
            got_w: img.width(),
            got_h: img.height(),
        });
    }
    let channels = img.channels();
    let mut out = Raster::new(flow.width, flow.height, channels)?;
    let mut mask = Raster::new(flow.width, flow.height, 1)?;
    for y in 0..flow.height {
        for x in 0..flow.width {
            let Some((dx, dy)) = flow.get(x, y) else {
                continue;
            };
            let sx = x as f32 + dx;
            let sy = y as f32 + dy;
            if let Some(v) = img.sample_bilinear(sx, sy) {
                for c in 0..channels {
                    out.set(x, y, c, v[c]);
                }
                mask.set(x, y, 0, 1.0);
            }
        }
    }
    Ok((out, mask))
}

/// Outcome of [`invert_flow`]: the inverse field plus how well the
/// round-trip composition closes.
#[derive(Clone, Debug)]
pub struct FlowInversion {
    pub flow: FlowField,
    pub mean_composition_error: f64,
    pub max_composition_error: f64,
}

const INVERT_ITERS: usize = 12;
const INVERT_TOL: f32 = 0.05;

/// Invert a flow field: the result lives on the source frame's grid and
/// points back into the input's grid.
///
/// Scatter seeding followed by fixed-point refinement
/// `v <- -flow(p + v)`; pixels whose composition error stays above 0.05 px
/// (non-injective or unseen regions) are masked invalid.
pub fn invert_flow(flow: &FlowField) -> Result<FlowInversion, GeometryError> {
    if flow.valid.iter().all(|&v| !v) {
        return Err(GeometryError::AllInvalid);
    }
    let (sw, sh) = flow.source_size;
    let mut acc_x = vec![0.0f64; sw * sh];
    let mut acc_y = vec![0.0f64; sw * sh];
    let mut acc_w = vec![0.0f64; sw * sh];
    for y in 0..flow.height {
        for x in 0..flow.width {
            let Some((dx, dy)) = flow.get(x, y) else {
                continue;
            };
            let tx = x as f64 + dx as f64;
            let ty = y as f64 + dy as f64;
            if !(tx.is_finite() && ty.is_finite()) {
                continue;
            }
            let x0 = tx.floor() as i64;
            let y0 = ty.floor() as i64;
            for (nx, ny) in [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)] {
                if nx < 0 || ny < 0 || nx >= sw as i64 || ny >= sh as i64 {
                    continue;
                }
                let wgt = (1.0 - (tx - nx as f64).abs()) * (1.0 - (ty - ny as f64).abs());
                if wgt <= 0.0 {
                    continue;
                }
                let j = ny as usize * sw + nx as usize;
                acc_x[j] += wgt * (x as f64 - nx as f64);
                acc_y[j] += wgt * (y as f64 - ny as f64);
                acc_w[j] += wgt;
            }
        }
    }

    let mut inv = FlowField::invalid(sw, sh, flow.dims());
    let mut err_sum = 0.0f64;
    let mut err_max = 0.0f64;
    let mut n = 0usize;
    for py in 0..sh {
        for px in 0..sw {
            let j = py * sw + px;
            let mut v = if acc_w[j] > 1e-9 {
                (
                    (acc_x[j] / acc_w[j]) as f32,
                    (acc_y[j] / acc_w[j]) as f32,
                )
            } else {
                (0.0, 0.0)
            };
            let mut converged = false;
            let mut residual = f32::INFINITY;
            for _ in 0..INVERT_ITERS {
                let ax = px as f32 + v.0;
                let ay = py as f32 + v.1;
                let Some((fx, fy)) = flow.sample(ax, ay) else {
                    break;
                };
                // Residual of a + flow(a) = p.
                let rx = ax + fx - px as f32;
                let ry = ay + fy - py as f32;
                residual = rx.hypot(ry);
                if residual < INVERT_TOL {
                    converged = true;
                    break;
                }
                v = (-fx, -fy);
            }
            if converged {
                inv.set(px, py, v.0, v.1);
                err_sum += residual as f64;
                err_max = err_max.max(residual as f64);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(GeometryError::AllInvalid);
    }
    Ok(FlowInversion {
        flow: inv,
        mean_composition_error: err_sum / n as f64,
        max_composition_error: err_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Raster {
        Raster::from_fn(w, h, 1, |x, _| [x as f32 / (w - 1) as f32, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn zero_flow_is_identity_warp() {
        let img = ramp(16, 8);
        let flow = FlowField::zero(16, 8, (16, 8));
        let out = warp(&img, &flow).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn constant_flow_shifts_a_ramp() {
        // flow (-5, 0): output pixel x samples source x-5, shifting the
        // ramp right by 5 px.
        let img = ramp(32, 4);
        let mut flow = FlowField::zero(32, 4, (32, 4));
        for y in 0..4 {
            for x in 0..32 {
                flow.set(x, y, -5.0, 0.0);
            }
        }
        let (out, mask) = warp_with_mask(&img, &flow).unwrap();
        for x in 5..32 {
            let expected = img.get(x - 5, 0, 0);
            assert!((out.get(x, 0, 0) - expected).abs() < 1e-6);
            assert_eq!(mask.get(x, 0, 0), 1.0);
        }
        // Pixels that would sample left of the frame are masked out.
        assert_eq!(mask.get(0, 0, 0), 0.0);
        assert_eq!(out.get(0, 0, 0), 0.0);
    }

    #[test]
    fn warp_is_linear_in_the_image() {
        let a = ramp(20, 10);
        let b = Raster::from_fn(20, 10, 1, |x, y| {
            [((x * 7 + y * 3) % 11) as f32 / 10.0, 0.0, 0.0]
        })
        .unwrap();
        let mut flow = FlowField::zero(20, 10, (20, 10));
        for y in 0..10 {
            for x in 0..20 {
                flow.set(x, y, 1.3 * (y as f32 * 0.2).sin(), -0.7);
            }
        }
        let combo = a.zip_map(&b, |u, v| 0.6 * u + 0.4 * v).unwrap();
        let w_combo = warp(&combo, &flow).unwrap();
        let w_a = warp(&a, &flow).unwrap();
        let w_b = warp(&b, &flow).unwrap();
        let recombined = w_a.zip_map(&w_b, |u, v| 0.6 * u + 0.4 * v).unwrap();
        let diff = w_combo.mean_abs_diff(&recombined).unwrap();
        assert!(diff < 1e-6, "linearity violated: {diff}");
    }

    #[test]
    fn warp_checks_source_frame() {
        let img = ramp(16, 8);
        let flow = FlowField::zero(16, 8, (10, 10));
        assert!(matches!(
            warp(&img, &flow),
            Err(GeometryError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn invert_zero_flow_is_zero() {
        let flow = FlowField::zero(12, 9, (12, 9));
        let inv = invert_flow(&flow).unwrap();
        assert!(inv.max_composition_error < 1e-6);
        for y in 0..9 {
            for x in 0..12 {
                let (dx, dy) = inv.flow.get(x, y).unwrap();
                assert!(dx.abs() < 1e-6 && dy.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn invert_constant_translation_negates_it() {
        let mut flow = FlowField::zero(24, 24, (24, 24));
        for y in 0..24 {
            for x in 0..24 {
                flow.set(x, y, -5.0, 0.0);
            }
        }
        let inv = invert_flow(&flow).unwrap();
        let mut checked = 0;
        for y in 0..24 {
            for x in 0..19 {
                // Target pixels beyond the seeded band have no preimage.
                if let Some((dx, dy)) = inv.flow.get(x, y) {
                    assert!((dx - 5.0).abs() < 0.05, "dx {dx}");
                    assert!(dy.abs() < 0.05, "dy {dy}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 200, "only {checked} pixels inverted");
    }

    #[test]
    fn fill_invalid_copies_nearest_neighbor() {
        let mut flow = FlowField::invalid(8, 8, (8, 8));
        flow.set(0, 0, 2.0, -1.0);
        flow.fill_invalid_nearest().unwrap();
        assert!((0..8).all(|y| (0..8).all(|x| flow.is_valid(x, y))));
        let (dx, dy) = flow.get(7, 7).unwrap();
        assert_eq!((dx, dy), (2.0, -1.0));
    }

    #[test]
    fn fill_fails_without_any_valid_pixel() {
        let mut flow = FlowField::invalid(4, 4, (4, 4));
        assert!(matches!(
            flow.fill_invalid_nearest(),
            Err(GeometryError::AllInvalid)
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.pfm");
        let mut flow = FlowField::zero(6, 5, (9, 7));
        flow.set(2, 3, 1.25, -0.5);
        flow.set_invalid(4, 4);
        flow.save(&path).unwrap();
        let back = FlowField::load(&path).unwrap();
        assert_eq!(back.dims(), (6, 5));
        assert_eq!(back.source_size(), (9, 7));
        assert_eq!(back.get(2, 3), Some((1.25, -0.5)));
        assert_eq!(back.get(4, 4), None);
    }
}
