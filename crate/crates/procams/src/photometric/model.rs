use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{levels_for_k, MixingFit, PhotometricError, SurfacePriorSet};
use crate::imaging::{read_pfm, write_pfm, ImagingError, Raster};

/// Response spans below this are treated as non-invertible (flat).
pub const FLAT_EPS: f32 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseMode {
    /// Single linear gain through the origin, from the level-64 probe alone.
    Gain,
    /// Monotone curve with one knot per probe level, evaluated as a
    /// slope-clamped cubic between knots.
    Curve,
}

/// Hermite slopes for up to five non-decreasing knots: distance-weighted
/// secant averages inside, extrapolated boundary parabolas at the ends,
/// every slope clamped into `[0, 3 * min(adjacent secants)]` — the classic
/// condition that keeps each cubic segment monotone. Collinear knots get
/// their own secant back, so exactly linear responses stay exactly linear.
fn monotone_slopes(xs: &[f64], ys: &[f64], ms: &mut [f64]) {
    let n = xs.len();
    debug_assert!((2..=5).contains(&n) && ys.len() == n && ms.len() == n);
    let mut h = [0f64; 4];
    let mut d = [0f64; 4];
    for i in 0..n - 1 {
        h[i] = xs[i + 1] - xs[i];
        d[i] = (ys[i + 1] - ys[i]) / h[i];
    }
    if n == 2 {
        ms[0] = d[0];
        ms[1] = d[0];
        return;
    }
    ms[0] = d[0] + (d[0] - d[1]) * h[0] / (h[0] + h[1]);
    ms[n - 1] = d[n - 2] + (d[n - 2] - d[n - 3]) * h[n - 2] / (h[n - 2] + h[n - 3]);
    for i in 1..n - 1 {
        ms[i] = (h[i] * d[i - 1] + h[i - 1] * d[i]) / (h[i - 1] + h[i]);
    }
    for i in 0..n {
        let left = if i == 0 { d[0] } else { d[i - 1] };
        let right = if i == n - 1 { d[n - 2] } else { d[i] };
        let cap = (3.0 * left.min(right)).max(0.0);
        ms[i] = ms[i].clamp(0.0, cap);
    }
}

/// Cubic Hermite value on one segment; `t` in `[0, 1]`, `h` the drive span.
fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m1
}

fn hermite_deriv(y0: f64, y1: f64, m0: f64, m1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    (6.0 * t2 - 6.0 * t) * y0
        + (3.0 * t2 - 4.0 * t + 1.0) * h * m0
        + (-6.0 * t2 + 6.0 * t) * y1
        + (3.0 * t2 - 2.0 * t) * h * m1
}

/// Per-pixel, per-channel map from projector drive to captured value.
///
/// `knots[i]` holds the captured value at drive `levels[i] / 255` for every
/// pixel and channel; values are non-decreasing along `i`. In `Gain` mode
/// there is a single raster holding the gain instead. An optional global
/// crosstalk estimate composes on the drive side: forward evaluation is
/// `curve(V * drive + o)` per channel.
#[derive(Clone, Debug)]
pub struct PhotometricModel {
    mode: ResponseMode,
    levels: Vec<u8>,
    knots: Vec<Raster>,
    mixing_est: Option<MixingFit>,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    mode: ResponseMode,
    levels: Vec<u8>,
    width: usize,
    height: usize,
    channels: usize,
    mixing: Option<MixingFit>,
    mean_gamut_span: f64,
}

/// Fractions of samples that fell outside the invertible range.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ClipReport {
    /// Clipped fraction (low + high) per channel.
    pub per_channel: [f64; 3],
    /// Clipped fraction over all samples.
    pub fraction: f64,
    /// Fraction of samples whose curve was flat and took a neighbor's drive.
    pub flat_filled: f64,
}

/// Pool-adjacent-violators projection onto non-decreasing sequences.
fn pav_nondecreasing(v: &mut [f64]) {
    debug_assert!(v.len() <= 8);
    let mut val = [0f64; 8];
    let mut wt = [0usize; 8];
    let mut blocks = 0;
    for i in 0..v.len() {
        val[blocks] = v[i];
        wt[blocks] = 1;
        blocks += 1;
        while blocks > 1 && val[blocks - 2] > val[blocks - 1] {
            let w = wt[blocks - 2] + wt[blocks - 1];
            val[blocks - 2] = (wt[blocks - 2] as f64 * val[blocks - 2]
                + wt[blocks - 1] as f64 * val[blocks - 1])
                / w as f64;
            wt[blocks - 2] = w;
            blocks -= 1;
        }
    }
    let mut i = 0;
    for b in 0..blocks {
        for _ in 0..wt[b] {
            v[i] = val[b];
            i += 1;
        }
    }
}

/// Fit a per-pixel response model from probe captures.
///
/// One probe yields a gain through the origin (ambient assumed zero);
/// three or five yield a monotone curve via isotonic projection of the
/// sampled values. The model always carries three channels.
pub fn fit_from_priors(priors: &SurfacePriorSet) -> Result<PhotometricModel, PhotometricError> {
    let levels = priors.levels().to_vec();
    let rgb: Vec<Raster> = priors.priors().iter().map(|p| p.to_rgb()).collect();
    if priors.k() == 1 {
        let drive = 64.0 / 255.0;
        let gain = rgb[0].map(|v| (v.max(0.0) as f64 / drive) as f32);
        return Ok(PhotometricModel {
            mode: ResponseMode::Gain,
            levels,
            knots: vec![gain],
            mixing_est: None,
        });
    }
    let k = priors.k();
    let (w, h) = priors.dims();
    let mut knots: Vec<Raster> = (0..k).map(|_| Raster::new(w, h, 3).unwrap()).collect();
    let n = w * h * 3;
    // Isotonic projection per sample: K <= 5 values, equal weights.
    let mut column = [0f64; 5];
    for s in 0..n {
        for (i, img) in rgb.iter().enumerate() {
            column[i] = img.samples()[s] as f64;
        }
        pav_nondecreasing(&mut column[..k]);
        for (i, knot) in knots.iter_mut().enumerate() {
            knot.samples_mut()[s] = column[i] as f32;
        }
    }
    Ok(PhotometricModel {
        mode: ResponseMode::Curve,
        levels,
        knots,
        mixing_est: None,
    })
}

impl PhotometricModel {
    pub fn mode(&self) -> ResponseMode {
        self.mode
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn dims(&self) -> (usize, usize) {
        self.knots[0].dims()
    }

    pub fn knots(&self) -> &[Raster] {
        &self.knots
    }

    pub fn mixing(&self) -> Option<&MixingFit> {
        self.mixing_est.as_ref()
    }

    pub fn set_mixing(&mut self, fit: Option<MixingFit>) {
        self.mixing_est = fit;
    }

    /// Level-0 capture when one was probed; the ambient-plus-black floor.
    pub fn ambient_est(&self) -> Option<&Raster> {
        (self.mode == ResponseMode::Curve && self.levels[0] == 0).then(|| &self.knots[0])
    }

    /// Smallest capturable value per sample: the drive-0 response.
    pub fn gamut_min(&self, x: usize, y: usize, c: usize) -> f32 {
        match self.mode {
            ResponseMode::Gain => 0.0,
            ResponseMode::Curve => self.knots[0].get(x, y, c),
        }
    }

    /// Largest capturable value per sample: the full-drive response.
    pub fn gamut_max(&self, x: usize, y: usize, c: usize) -> f32 {
        match self.mode {
            ResponseMode::Gain => self.knots[0].get(x, y, c),
            ResponseMode::Curve => self.knots[self.knots.len() - 1].get(x, y, c),
        }
    }

    fn knot_drives(&self) -> Vec<f32> {
        self.levels.iter().map(|&l| l as f32 / 255.0).collect()
    }

    /// Knot drives, values, and monotone Hermite slopes for one sample.
    fn sample_curve(&self, s: usize, drives: &[f32]) -> ([f64; 5], [f64; 5], [f64; 5]) {
        let k = self.knots.len();
        let mut xs = [0f64; 5];
        let mut ys = [0f64; 5];
        let mut ms = [0f64; 5];
        for j in 0..k {
            xs[j] = drives[j] as f64;
            ys[j] = self.knots[j].samples()[s] as f64;
        }
        monotone_slopes(&xs[..k], &ys[..k], &mut ms[..k]);
        (xs, ys, ms)
    }

    /// Forward response of one sample at drive `d` (no crosstalk term).
    fn eval_sample(&self, s: usize, drives: &[f32], d: f32) -> f32 {
        let d = d.clamp(0.0, 1.0);
        match self.mode {
            ResponseMode::Gain => self.knots[0].samples()[s] * d,
            ResponseMode::Curve => {
                if d <= drives[0] {
                    return self.knots[0].samples()[s];
                }
                let last = drives.len() - 1;
                if d >= drives[last] {
                    return self.knots[last].samples()[s];
                }
                let mut i = 0;
                while d > drives[i + 1] {
                    i += 1;
                }
                let (xs, ys, ms) = self.sample_curve(s, drives);
                let h = xs[i + 1] - xs[i];
                let t = (d as f64 - xs[i]) / h;
                hermite(ys[i], ys[i + 1], ms[i], ms[i + 1], h, t) as f32
            }
        }
    }

    /// Inverse of one sample's curve. Returns `(drive, clipped)`; `None`
    /// when the response span is flat.
    fn invert_sample(&self, s: usize, drives: &[f32], target: f32) -> Option<(f32, bool)> {
        match self.mode {
            ResponseMode::Gain => {
                let g = self.knots[0].samples()[s];
                if g < FLAT_EPS {
                    return None;
                }
                if target > g {
                    Some((1.0, true))
                } else {
                    Some(((target.max(0.0) / g).min(1.0), false))
                }
            }
            ResponseMode::Curve => {
                let last = self.knots.len() - 1;
                let lo = self.knots[0].samples()[s];
                let hi = self.knots[last].samples()[s];
                if hi - lo < FLAT_EPS {
                    return None;
                }
                if target < lo {
                    return Some((drives[0], true));
                }
                if target > hi {
                    return Some((drives[last], true));
                }
                let mut i = 0;
                while i < last && self.knots[i + 1].samples()[s] < target {
                    i += 1;
                }
                let a = self.knots[i].samples()[s];
                let b = self.knots[i + 1].samples()[s];
                if b - a < FLAT_EPS {
                    return Some((drives[i], false));
                }
                let (xs, ys, ms) = self.sample_curve(s, drives);
                let h = xs[i + 1] - xs[i];
                let goal = target as f64;
                // Safeguarded Newton on the monotone cubic: the bracket
                // never fails, Newton just gets there faster.
                let (mut tlo, mut thi) = (0.0f64, 1.0f64);
                let mut t = ((goal - ys[i]) / (ys[i + 1] - ys[i])).clamp(0.0, 1.0);
                for _ in 0..32 {
                    let f = hermite(ys[i], ys[i + 1], ms[i], ms[i + 1], h, t) - goal;
                    if f.abs() < 1e-10 {
                        break;
                    }
                    if f > 0.0 {
                        thi = t;
                    } else {
                        tlo = t;
                    }
                    let df = hermite_deriv(ys[i], ys[i + 1], ms[i], ms[i + 1], h, t);
                    let tn = t - f / df;
                    t = if df > 1e-12 && tn > tlo && tn < thi {
                        tn
                    } else {
                        0.5 * (tlo + thi)
                    };
                }
                Some(((xs[i] + t * h) as f32, false))
            }
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), PhotometricError> {
        fs::create_dir_all(dir).map_err(|e| ImagingError::Io {
            context: dir.display().to_string(),
            source: e,
        })?;
        let (w, h) = self.dims();
        let mut span = 0.0;
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    span += (self.gamut_max(x, y, c) - self.gamut_min(x, y, c)) as f64;
                }
            }
        }
        let header = ModelHeader {
            mode: self.mode,
            levels: self.levels.clone(),
            width: w,
            height: h,
            channels: 3,
            mixing: self.mixing_est.clone(),
            mean_gamut_span: span / (w * h * 3) as f64,
        };
        let json = serde_json::to_string_pretty(&header).expect("header serializes");
        fs::write(dir.join("model.json"), json).map_err(|e| ImagingError::Io {
            context: dir.join("model.json").display().to_string(),
            source: e,
        })?;
        for (i, knot) in self.knots.iter().enumerate() {
            write_pfm(knot, &dir.join(format!("knots_{i}.pfm")))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, PhotometricError> {
        let path = dir.join("model.json");
        let text = fs::read_to_string(&path).map_err(|e| ImagingError::Io {
            context: path.display().to_string(),
            source: e,
        })?;
        let header: ModelHeader =
            serde_json::from_str(&text).map_err(|e| PhotometricError::BadPriors {
                what: format!("unreadable model header: {e}"),
            })?;
        let expected_k = match header.mode {
            ResponseMode::Gain => 1,
            ResponseMode::Curve => header.levels.len(),
        };
        match header.mode {
            ResponseMode::Gain if header.levels != [64] => {
                return Err(PhotometricError::BadPriors {
                    what: format!("gain model with levels {:?}", header.levels),
                })
            }
            ResponseMode::Curve
                if levels_for_k(header.levels.len()) != Some(header.levels.as_slice())
                    || header.levels.len() < 3 =>
            {
                return Err(PhotometricError::BadPriors {
                    what: format!("curve model with levels {:?}", header.levels),
                })
            }
            _ => {}
        }
        let mut knots = Vec::with_capacity(expected_k);
        for i in 0..expected_k {
            let knot = read_pfm(&dir.join(format!("knots_{i}.pfm")))?;
            if knot.dims() != (header.width, header.height) || knot.channels() != 3 {
                return Err(PhotometricError::Misaligned {
                    a: format!("{}x{}x3", header.width, header.height),
                    b: knot.shape_string(),
                });
            }
            knots.push(knot);
        }
        // Monotonicity is a construction invariant; stored data must obey it.
        if header.mode == ResponseMode::Curve {
            let n = header.width * header.height * 3;
            for s in 0..n {
                for i in 1..expected_k {
                    if knots[i].samples()[s] < knots[i - 1].samples()[s] {
                        return Err(PhotometricError::BadPriors {
                            what: format!("stored knots decrease at sample {s}"),
                        });
                    }
                }
            }
        }
        Ok(Self {
            mode: header.mode,
            levels: header.levels,
            knots,
            mixing_est: header.mixing,
        })
    }
}

/// Predicted capture of a drive image under the fitted model.
pub fn apply_forward(
    model: &PhotometricModel,
    drive: &Raster,
) -> Result<Raster, PhotometricError> {
    let drive = drive.to_rgb();
    if drive.dims() != model.dims() {
        return Err(PhotometricError::ModelShape {
            got: drive.shape_string(),
            expected: format!("{}x{}", model.dims().0, model.dims().1),
        });
    }
    let (w, h) = model.dims();
    let drives = model.knot_drives();
    let mixing = model
        .mixing()
        .map(|m| (m.matrix, m.offset))
        .unwrap_or((crate::sim::Mat3::identity(), [0.0; 3]));
    let has_mixing = model.mixing().is_some();
    let mut out = Raster::new(w, h, 3)?;
    out.samples_mut()
        .par_chunks_mut(w * 3)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let px = drive.pixel_rgb(x, y);
                let e = if has_mixing {
                    let v = mixing
                        .0
                        .mul_vec([px[0] as f64, px[1] as f64, px[2] as f64]);
                    [
                        (v[0] + mixing.1[0]).clamp(0.0, 1.0) as f32,
                        (v[1] + mixing.1[1]).clamp(0.0, 1.0) as f32,
                        (v[2] + mixing.1[2]).clamp(0.0, 1.0) as f32,
                    ]
                } else {
                    px
                };
                for c in 0..3 {
                    let s = (y * w + x) * 3 + c;
                    row[x * 3 + c] = model.eval_sample(s, &drives, e[c]);
                }
            }
        });
    Ok(out)
}

/// Drive image whose predicted capture best matches `target`, with the
/// fraction of samples that had to clip to the gamut boundary.
///
/// Samples with a flat response take the drive of the nearest invertible
/// pixel in that channel; a channel that is flat everywhere gets zero
/// drive (it cannot influence the capture). When a crosstalk estimate is
/// present its inverse is applied after curve inversion.
pub fn apply_pseudo_inverse(
    model: &PhotometricModel,
    target: &Raster,
) -> Result<(Raster, ClipReport), PhotometricError> {
    let target = target.to_rgb();
    if target.dims() != model.dims() {
        return Err(PhotometricError::ModelShape {
            got: target.shape_string(),
            expected: format!("{}x{}", model.dims().0, model.dims().1),
        });
    }
    let (w, h) = model.dims();
    let drives = model.knot_drives();
    let mut effective = Raster::new(w, h, 3)?;
    let mut flat = vec![false; w * h * 3];

    struct RowStats {
        clipped: [u64; 3],
        flat: u64,
    }
    let stats: Vec<RowStats> = effective
        .samples_mut()
        .par_chunks_mut(w * 3)
        .zip(flat.par_chunks_mut(w * 3))
        .enumerate()
        .map(|(y, (row, flat_row))| {
            let mut st = RowStats {
                clipped: [0; 3],
                flat: 0,
            };
            for x in 0..w {
                for c in 0..3 {
                    let s = (y * w + x) * 3 + c;
                    match model.invert_sample(s, &drives, target.get(x, y, c)) {
                        Some((d, clipped)) => {
                            row[x * 3 + c] = d;
                            if clipped {
                                st.clipped[c] += 1;
                            }
                        }
                        None => {
                            flat_row[x * 3 + c] = true;
                            st.flat += 1;
                        }
                    }
                }
            }
            st
        })
        .collect();

    let mut clipped = [0u64; 3];
    let mut flat_count = 0u64;
    for st in &stats {
        for c in 0..3 {
            clipped[c] += st.clipped[c];
        }
        flat_count += st.flat;
    }
    if flat_count as usize == w * h * 3 {
        return Err(PhotometricError::AllFlat);
    }
    if flat_count > 0 {
        fill_flat_from_neighbors(&mut effective, &flat);
    }

    let out = match model.mixing() {
        Some(m) => {
            let inv = m.matrix.inverse().ok_or(PhotometricError::RankDeficient)?;
            let o = m.offset;
            let mut out = Raster::new(w, h, 3)?;
            out.samples_mut()
                .par_chunks_mut(w * 3)
                .enumerate()
                .for_each(|(y, row)| {
                    for x in 0..w {
                        let e = effective.pixel_rgb(x, y);
                        let v = inv.mul_vec([
                            e[0] as f64 - o[0],
                            e[1] as f64 - o[1],
                            e[2] as f64 - o[2],
                        ]);
                        for c in 0..3 {
                            row[x * 3 + c] = v[c].clamp(0.0, 1.0) as f32;
                        }
                    }
                });
            out
        }
        None => effective,
    };

    let total = (w * h) as f64;
    let report = ClipReport {
        per_channel: [
            clipped[0] as f64 / total,
            clipped[1] as f64 / total,
            clipped[2] as f64 / total,
        ],
        fraction: (clipped[0] + clipped[1] + clipped[2]) as f64 / (total * 3.0),
        flat_filled: flat_count as f64 / (total * 3.0),
    };
    Ok((out, report))
}

/// Multi-source BFS per channel: flat samples copy the drive of the
/// nearest (4-connected) invertible pixel. Entirely flat channels get 0.
fn fill_flat_from_neighbors(drive: &mut Raster, flat: &[bool]) {
    let (w, h) = drive.dims();
    for c in 0..3 {
        let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
        let mut known = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if !flat[(y * w + x) * 3 + c] {
                    known[y * w + x] = true;
                    queue.push_back((x, y));
                }
            }
        }
        if queue.is_empty() {
            for y in 0..h {
                for x in 0..w {
                    drive.set(x, y, c, 0.0);
                }
            }
            continue;
        }
        if queue.len() == w * h {
            continue;
        }
        while let Some((x, y)) = queue.pop_front() {
            let v = drive.get(x, y, c);
            let neighbors = [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ];
            for (nx, ny) in neighbors {
                if nx < w && ny < h && !known[ny * w + nx] {
                    known[ny * w + nx] = true;
                    drive.set(nx, ny, c, v);
                    queue.push_back((nx, ny));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photometric::SurfacePriorSet;

    fn gray(w: usize, h: usize, v: f32) -> Raster {
        Raster::constant(w, h, 3, v).unwrap()
    }

    fn curve_model(vals: [f32; 5]) -> PhotometricModel {
        let set = SurfacePriorSet::new(
            vec![0, 64, 128, 191, 255],
            vals.iter().map(|&v| gray(4, 4, v)).collect(),
        )
        .unwrap();
        fit_from_priors(&set).unwrap()
    }

    #[test]
    fn pav_projects_onto_monotone() {
        let mut v = [1.0, 3.0, 2.0];
        pav_nondecreasing(&mut v);
        assert_eq!(v, [1.0, 2.5, 2.5]);

        let mut v = [3.0, 2.0, 1.0];
        pav_nondecreasing(&mut v);
        assert_eq!(v, [2.0, 2.0, 2.0]);

        let mut v = [0.0, 0.2, 0.1, 0.4, 0.3];
        pav_nondecreasing(&mut v);
        for i in 1..5 {
            assert!(v[i] >= v[i - 1]);
        }
        // Isotonic projection preserves the mean.
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_prior_fits_gain_through_origin() {
        let set = SurfacePriorSet::new(vec![64], vec![gray(4, 4, 0.5 * 64.0 / 255.0)]).unwrap();
        let model = fit_from_priors(&set).unwrap();
        assert_eq!(model.mode(), ResponseMode::Gain);
        let x = gray(4, 4, 0.8);
        let y = apply_forward(&model, &x).unwrap();
        for &v in y.samples() {
            assert!((v - 0.4).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_curve_reproduces_drive() {
        let model = curve_model([0.0, 64.0 / 255.0, 128.0 / 255.0, 191.0 / 255.0, 1.0]);
        for d in [0.0, 0.1, 0.25, 0.5, 0.77, 1.0] {
            let y = apply_forward(&model, &gray(4, 4, d)).unwrap();
            assert!((y.get(2, 2, 1) - d).abs() < 1e-6, "drive {d}");
        }
    }

    #[test]
    fn forward_interpolates_between_knots() {
        // Response doubles the drive up to saturation at 0.5 drive.
        let model = curve_model([0.0, 128.0 / 255.0, 1.0, 1.0, 1.0]);
        let y = apply_forward(&model, &gray(4, 4, 0.25)).unwrap();
        assert!((y.get(0, 0, 0) - 0.4990).abs() < 1e-3);
        let y = apply_forward(&model, &gray(4, 4, 0.75)).unwrap();
        assert!((y.get(0, 0, 0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pseudo_inverse_hits_target_through_gain() {
        let set = SurfacePriorSet::new(vec![64], vec![gray(4, 4, 0.5 * 64.0 / 255.0)]).unwrap();
        let model = fit_from_priors(&set).unwrap();
        let (drive, clip) = apply_pseudo_inverse(&model, &gray(4, 4, 0.4)).unwrap();
        for &v in drive.samples() {
            assert!((v - 0.8).abs() < 1e-6);
        }
        assert_eq!(clip.fraction, 0.0);
        assert_eq!(clip.flat_filled, 0.0);
    }

    #[test]
    fn out_of_gamut_targets_clip_and_are_counted() {
        let set = SurfacePriorSet::new(vec![64], vec![gray(4, 4, 0.5 * 64.0 / 255.0)]).unwrap();
        let model = fit_from_priors(&set).unwrap();
        let (drive, clip) = apply_pseudo_inverse(&model, &gray(4, 4, 0.9)).unwrap();
        for &v in drive.samples() {
            assert_eq!(v, 1.0);
        }
        assert!((clip.fraction - 1.0).abs() < 1e-12);
        assert_eq!(clip.per_channel, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn below_gamut_targets_clip_to_zero_drive() {
        // Curve floor at 0.2: darker targets are unreachable.
        let model = curve_model([0.2, 0.4, 0.6, 0.8, 1.0]);
        let (drive, clip) = apply_pseudo_inverse(&model, &gray(4, 4, 0.1)).unwrap();
        for &v in drive.samples() {
            assert_eq!(v, 0.0);
        }
        assert!((clip.fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curve_roundtrip_is_tight_in_gamut() {
        // Gamma-like monotone response sampled at the probe levels.
        let resp = |d: f32| 0.08 + 0.85 * d.powf(2.2);
        let vals = [
            resp(0.0),
            resp(64.0 / 255.0),
            resp(128.0 / 255.0),
            resp(191.0 / 255.0),
            resp(1.0),
        ];
        let model = curve_model(vals);
        for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let (drive, clip) = apply_pseudo_inverse(&model, &gray(4, 4, t)).unwrap();
            assert_eq!(clip.fraction, 0.0);
            let back = apply_forward(&model, &drive).unwrap();
            assert!(
                (back.get(1, 1, 2) - t).abs() < 1e-6,
                "target {t} came back {}",
                back.get(1, 1, 2)
            );
        }
    }

    #[test]
    fn flat_pixels_take_nearest_invertible_drive() {
        // Left half responds, right half is in shadow (flat zero response).
        let mut priors = Vec::new();
        for level in [0u8, 64, 128, 191, 255] {
            let v = level as f32 / 255.0;
            priors.push(
                Raster::from_fn(8, 8, 3, |x, _| if x < 4 { [v * 0.9; 3] } else { [0.0; 3] }).unwrap(),
            );
        }
        let set = SurfacePriorSet::new(vec![0, 64, 128, 191, 255], priors).unwrap();
        let model = fit_from_priors(&set).unwrap();
        let (drive, clip) = apply_pseudo_inverse(&model, &gray(8, 8, 0.45)).unwrap();
        assert!((clip.flat_filled - 0.5).abs() < 1e-12);
        for y in 0..8 {
            for x in 0..8 {
                // Flat right half inherits the 0.5 drive solved on the left.
                assert!((drive.get(x, y, 0) - 0.5).abs() < 1e-6, "({x},{y})");
            }
        }
    }

    #[test]
    fn fully_flat_model_errors() {
        let set = SurfacePriorSet::new(vec![64], vec![gray(4, 4, 0.0)]).unwrap();
        let model = fit_from_priors(&set).unwrap();
        assert!(matches!(
            apply_pseudo_inverse(&model, &gray(4, 4, 0.3)),
            Err(PhotometricError::AllFlat)
        ));
    }

    #[test]
    fn noisy_priors_yield_monotone_knots() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut priors = Vec::new();
        for level in [0u8, 64, 128, 191, 255] {
            let base = level as f32 / 255.0;
            priors.push(
                Raster::from_fn(6, 6, 3, |_, _| {
                    [(); 3].map(|_| (base + rng.gen_range(-0.04..0.04f32)).clamp(0.0, 1.0))
                })
                .unwrap(),
            );
        }
        let set = SurfacePriorSet::new(vec![0, 64, 128, 191, 255], priors).unwrap();
        let model = fit_from_priors(&set).unwrap();
        let n = 6 * 6 * 3;
        for s in 0..n {
            for i in 1..5 {
                assert!(model.knots()[i].samples()[s] >= model.knots()[i - 1].samples()[s]);
            }
        }
    }

    #[test]
    fn save_load_roundtrip_preserves_model() {
        let dir = tempfile::tempdir().unwrap();
        let resp = |d: f32| 0.05 + 0.9 * d.powf(1.8);
        let mut model = curve_model([
            resp(0.0),
            resp(64.0 / 255.0),
            resp(128.0 / 255.0),
            resp(191.0 / 255.0),
            resp(1.0),
        ]);
        model.set_mixing(Some(MixingFit {
            matrix: crate::sim::Mat3::identity(),
            offset: [0.01, 0.0, 0.02],
            residual_rms: 0.0,
        }));
        model.save(dir.path()).unwrap();
        let loaded = PhotometricModel::load(dir.path()).unwrap();
        assert_eq!(loaded.mode(), ResponseMode::Curve);
        assert_eq!(loaded.levels(), model.levels());
        assert!(loaded.mixing().is_some());
        for (a, b) in model.knots().iter().zip(loaded.knots()) {
            assert_eq!(a.samples(), b.samples());
        }
        let x = gray(4, 4, 0.37);
        let ya = apply_forward(&model, &x).unwrap();
        let yb = apply_forward(&loaded, &x).unwrap();
        assert_eq!(ya.samples(), yb.samples());
    }

    #[test]
    fn load_rejects_non_monotone_knots() {
        let dir = tempfile::tempdir().unwrap();
        let model = curve_model([0.0, 0.3, 0.5, 0.7, 1.0]);
        model.save(dir.path()).unwrap();
        // Corrupt one stored knot so the sequence decreases.
        let path = dir.path().join("knots_2.pfm");
        let mut knot = read_pfm(&path).unwrap();
        knot.set(1, 1, 0, 0.05);
        write_pfm(&knot, &path).unwrap();
        assert!(PhotometricModel::load(dir.path()).is_err());
    }

    #[test]
    fn more_priors_predict_held_out_levels_better() {
        use crate::photometric::levels_for_k;
        use crate::sim::{capture_surface_prior, render_capture, SetupConfig};

        // Nonlinear response (projector gamma, linear sensor), flat
        // geometry: prediction error at unprobed drive levels must drop
        // strictly as the probe ladder refines, averaged over setups.
        let mut err = [0.0f64; 3];
        let seeds = 10;
        for seed in 0..seeds {
            let mut setup = SetupConfig::identity((24, 24), seed);
            setup.projector_gamma = 1.8 + 0.06 * seed as f64;
            setup.camera_gamma = 1.0;
            setup.ambient = crate::imaging::ColorTriple::gray_linear(0.02);
            setup.noise_sigma = 0.0;
            let fx = 0.7 + 0.05 * seed as f64;
            setup.reflectance = Raster::from_fn(24, 24, 3, |x, y| {
                let v = 0.6 + 0.35 * ((x as f64 * fx + y as f64 * 0.9).sin() * 0.5);
                [v as f32, (v * 0.9) as f32, (v * 1.05).min(1.0) as f32]
            })
            .unwrap();

            for (ki, &k) in [1usize, 3, 5].iter().enumerate() {
                let levels = levels_for_k(k).unwrap().to_vec();
                let priors: Vec<Raster> = levels
                    .iter()
                    .map(|&l| capture_surface_prior(l, &setup, false).unwrap())
                    .collect();
                let set = SurfacePriorSet::new(levels, priors).unwrap();
                let model = fit_from_priors(&set).unwrap();
                for held_out in [96u8, 160, 224] {
                    let d = held_out as f32 / 255.0;
                    let drive = gray(24, 24, d);
                    let truth = render_capture(&drive, &setup, false).unwrap();
                    let pred = apply_forward(&model, &drive).unwrap();
                    let mut sq = 0.0;
                    for (a, b) in pred.samples().iter().zip(truth.samples()) {
                        sq += ((a - b) as f64).powi(2);
                    }
                    err[ki] += (sq / pred.samples().len() as f64).sqrt();
                }
            }
        }
        let norm = (seeds * 3) as f64;
        let (e1, e3, e5) = (err[0] / norm, err[1] / norm, err[2] / norm);
        assert!(e5 < e3 && e3 < e1, "e1={e1:.5} e3={e3:.5} e5={e5:.5}");
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let model = curve_model([0.0, 0.25, 0.5, 0.75, 1.0]);
        let wrong = gray(5, 4, 0.5);
        assert!(matches!(
            apply_forward(&model, &wrong),
            Err(PhotometricError::ModelShape { .. })
        ));
        assert!(matches!(
            apply_pseudo_inverse(&model, &wrong),
            Err(PhotometricError::ModelShape { .. })
        ));
    }
}
