use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::imaging::Raster;

/// Axis-aligned pixel rectangle: `x, y` top-left, `w, h` extents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

fn require_mask(mask: &Raster) -> Result<(), GeometryError> {
    if mask.channels() != 1 {
        return Err(GeometryError::BadMask);
    }
    Ok(())
}

/// Bounding box of the nonzero pixels of a binary mask.
pub fn mask_bbox(mask: &Raster) -> Result<Rect, GeometryError> {
    require_mask(mask)?;
    let (mut x0, mut y0) = (usize::MAX, usize::MAX);
    let (mut x1, mut y1) = (0usize, 0usize);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y, 0) > 0.5 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(GeometryError::EmptyMask);
    }
    Ok(Rect {
        x: x0,
        y: y0,
        w: x1 - x0 + 1,
        h: y1 - y0 + 1,
    })
}

/// Restrict `img` to the mask's bounding box, zeroing out-of-mask pixels.
/// Returns the crop and its top-left offset in the original frame.
pub fn crop_to_bbox(
    img: &Raster,
    mask: &Raster,
) -> Result<(Raster, (usize, usize)), GeometryError> {
    if mask.dims() != img.dims() {
        return Err(GeometryError::BadMask);
    }
    let bbox = mask_bbox(mask)?;
    let mut out = img.crop(bbox.x, bbox.y, bbox.w, bbox.h)?;
    for y in 0..bbox.h {
        for x in 0..bbox.w {
            if mask.get(bbox.x + x, bbox.y + y, 0) <= 0.5 {
                for c in 0..out.channels() {
                    out.set(x, y, c, 0.0);
                }
            }
        }
    }
    Ok((out, (bbox.x, bbox.y)))
}

/// Candidate ordering shared with the brute-force oracle: larger area wins,
/// then smaller y, then smaller x, then smaller h.
fn better(candidate: Rect, best: Option<Rect>) -> bool {
    match best {
        None => true,
        Some(b) => {
            let ka = (candidate.y, candidate.x, candidate.h);
            let kb = (b.y, b.x, b.h);
            candidate.area() > b.area() || (candidate.area() == b.area() && ka < kb)
        }
    }
}

/// Maximum-area axis-aligned rectangle of ones inside a binary mask.
///
/// Row-by-row largest-rectangle-in-histogram with a monotonic stack; ties
/// resolved by smallest (y, x, h).
pub fn max_inscribed_rect(mask: &Raster) -> Result<Rect, GeometryError> {
    require_mask(mask)?;
    let (w, h) = mask.dims();
    let mut heights = vec![0usize; w];
    let mut best: Option<Rect> = None;

    for row in 0..h {
        for x in 0..w {
            heights[x] = if mask.get(x, row, 0) > 0.5 {
                heights[x] + 1
            } else {
                0
            };
        }
        // Monotonic stack of (start_col, height).
        let mut stack: Vec<(usize, usize)> = Vec::with_capacity(w);
        for x in 0..=w {
            let cur = if x < w { heights[x] } else { 0 };
            let mut start = x;
            while let Some(&(s, hh)) = stack.last() {
                if hh <= cur {
                    break;
                }
                stack.pop();
                let cand = Rect {
                    x: s,
                    y: row + 1 - hh,
                    w: x - s,
                    h: hh,
                };
                if cand.area() > 0 && better(cand, best) {
                    best = Some(cand);
                }
                start = s;
            }
            if cur > 0 && stack.last().map_or(true, |&(_, hh)| hh < cur) {
                stack.push((start, cur));
            }
        }
    }
    best.ok_or(GeometryError::EmptyMask)
}

/// Scale-and-translate map from the projector frame into a target rect.
///
/// Edge-based convention: the projector's pixel footprint `[-0.5, w-0.5]`
/// maps onto the rect's footprint, so a half-size rect means scale 0.5
/// exactly. Positive scales only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub sx: f64,
    pub sy: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AffineMap {
    pub fn identity() -> Self {
        Self {
            sx: 1.0,
            sy: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.sx * x + self.tx, self.sy * y + self.ty)
    }

    pub fn apply_inverse(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.tx) / self.sx, (y - self.ty) / self.sy)
    }

    pub fn is_identity(&self) -> bool {
        (self.sx - 1.0).abs() < 1e-12
            && (self.sy - 1.0).abs() < 1e-12
            && self.tx.abs() < 1e-12
            && self.ty.abs() < 1e-12
    }
}

/// Fit the projector frame into `rect` by scaling and translating.
///
/// `preserve_aspect` letterboxes: one common scale, centered on the slack
/// axis. Otherwise each axis stretches independently.
pub fn fit_optimal_affine(rect: Rect, proj_size: (usize, usize), preserve_aspect: bool) -> AffineMap {
    let (pw, ph) = (proj_size.0 as f64, proj_size.1 as f64);
    let (rw, rh) = (rect.w as f64, rect.h as f64);
    let (mut sx, mut sy) = (rw / pw, rh / ph);
    if preserve_aspect {
        let s = sx.min(sy);
        sx = s;
        sy = s;
    }
    // Center the scaled footprint inside the rect footprint.
    let tx = rect.x as f64 + (rw - sx * pw) * 0.5 + 0.5 * sx - 0.5;
    let ty = rect.y as f64 + (rh - sy * ph) * 0.5 + 0.5 * sy - 0.5;
    AffineMap { sx, sy, tx, ty }
}
