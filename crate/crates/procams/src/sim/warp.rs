use serde::{Deserialize, Serialize};

use super::SimError;

/// Row-major 3x3 matrix; doubles as homography and channel-mixing storage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub fn identity() -> Self {
        Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Self([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Option<Mat3> {
        let d = self.det();
        if !d.is_finite() || d.abs() < 1e-12 {
            return None;
        }
        let m = &self.0;
        let c = |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
        // Adjugate transpose over determinant.
        Some(Mat3([
            [c(1, 1, 2, 2) / d, -c(0, 1, 2, 2) / d, c(0, 1, 1, 2) / d],
            [-c(1, 0, 2, 2) / d, c(0, 0, 2, 2) / d, -c(0, 0, 1, 2) / d],
            [c(1, 0, 2, 1) / d, -c(0, 0, 2, 1) / d, c(0, 0, 1, 1) / d],
        ]))
    }

    pub fn mul(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[r][k] * rhs.0[k][c]).sum();
            }
        }
        Mat3(out)
    }

    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Homogeneous point map with perspective divide; None near the pole
    /// line where w vanishes.
    pub fn apply_projective(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let [u, v, w] = self.mul_vec([x, y, 1.0]);
        if !w.is_finite() || w.abs() < 1e-9 {
            return None;
        }
        Some((u / w, v / w))
    }

    /// Scale so the bottom-right entry is exactly 1.
    pub fn normalized(&self) -> Option<Mat3> {
        let s = self.0[2][2];
        if !s.is_finite() || s.abs() < 1e-12 {
            return None;
        }
        let mut out = self.0;
        for row in &mut out {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Some(Mat3(out))
    }

    pub fn frobenius_dist(&self, rhs: &Mat3) -> f64 {
        let mut acc = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                acc += (self.0[r][c] - rhs.0[r][c]).powi(2);
            }
        }
        acc.sqrt()
    }
}

/// One band-limited displacement component.
///
/// Contributes `amp[0] * g(freq_x . c + phase[0])` to the x displacement
/// and `amp[1] * g(freq_y . c + phase[1])` to y, where g is a sine, or a
/// tanh-sharpened sine for `sharpness > 0` (ridge-like surfaces with the
/// same amplitude bound).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveTerm {
    pub amp: [f64; 2],
    pub freq_x: [f64; 2],
    pub freq_y: [f64; 2],
    pub phase: [f64; 2],
    pub sharpness: f64,
}

impl WaveTerm {
    fn g(&self, theta: f64) -> f64 {
        if self.sharpness <= 0.0 {
            theta.sin()
        } else {
            (self.sharpness * theta.sin()).tanh() / self.sharpness.tanh()
        }
    }

    fn g_prime(&self, theta: f64) -> f64 {
        if self.sharpness <= 0.0 {
            theta.cos()
        } else {
            let s = self.sharpness;
            let sech2 = 1.0 - (s * theta.sin()).tanh().powi(2);
            s * theta.cos() * sech2 / s.tanh()
        }
    }

    /// Tight bound on |dg/dtheta| (attained at theta = 0 for sharpened g).
    fn g_prime_max(&self) -> f64 {
        if self.sharpness <= 0.0 {
            1.0
        } else {
            self.sharpness / self.sharpness.tanh()
        }
    }
}

/// Gradient-norm cap keeping `c + D(c)` a global contraction-style
/// perturbation of the identity, hence injective and invertible by
/// fixed-point iteration.
pub const MAX_DISPLACEMENT_GRADIENT: f64 = 0.45;

const MAX_WAVE_TERMS: usize = 4;

/// Smooth analytic displacement over camera coordinates: a sum of at most
/// four sinusoid terms with a certified Jacobian bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct DisplacementField {
    terms: Vec<WaveTerm>,
}

impl DisplacementField {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn new(terms: Vec<WaveTerm>) -> Result<Self, SimError> {
        if terms.len() > MAX_WAVE_TERMS {
            return Err(SimError::InvalidConfig {
                what: format!("{} displacement terms exceed the limit of {MAX_WAVE_TERMS}", terms.len()),
            });
        }
        for t in &terms {
            let finite = t.amp.iter().chain(&t.freq_x).chain(&t.freq_y).chain(&t.phase)
                .all(|v| v.is_finite())
                && t.sharpness.is_finite()
                && t.sharpness >= 0.0;
            if !finite {
                return Err(SimError::InvalidConfig {
                    what: "displacement term has non-finite or negative-sharpness parameters".into(),
                });
            }
        }
        let field = Self { terms };
        let bound = field.gradient_bound();
        if bound > MAX_DISPLACEMENT_GRADIENT {
            return Err(SimError::InvalidConfig {
                what: format!(
                    "displacement gradient bound {bound:.3} exceeds {MAX_DISPLACEMENT_GRADIENT}"
                ),
            });
        }
        Ok(field)
    }

    /// Build from raw terms, shrinking amplitudes uniformly if the gradient
    /// bound would be violated.
    pub fn with_gradient_cap(mut terms: Vec<WaveTerm>, cap: f64) -> Result<Self, SimError> {
        let cap = cap.min(MAX_DISPLACEMENT_GRADIENT);
        let raw = Self {
            terms: terms.clone(),
        };
        let bound = raw.gradient_bound();
        if bound > cap && bound > 0.0 {
            let k = cap / bound;
            for t in &mut terms {
                t.amp[0] *= k;
                t.amp[1] *= k;
            }
        }
        Self::new(terms)
    }

    pub fn terms(&self) -> &[WaveTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let mut dx = 0.0;
        let mut dy = 0.0;
        for t in &self.terms {
            dx += t.amp[0] * t.g(t.freq_x[0] * x + t.freq_x[1] * y + t.phase[0]);
            dy += t.amp[1] * t.g(t.freq_y[0] * x + t.freq_y[1] * y + t.phase[1]);
        }
        (dx, dy)
    }

    /// Row-sum (infinity-norm) bound on the displacement Jacobian.
    pub fn gradient_bound(&self) -> f64 {
        let mut row_x = 0.0;
        let mut row_y = 0.0;
        for t in &self.terms {
            let g = t.g_prime_max();
            row_x += t.amp[0].abs() * g * (t.freq_x[0].abs() + t.freq_x[1].abs());
            row_y += t.amp[1].abs() * g * (t.freq_y[0].abs() + t.freq_y[1].abs());
        }
        row_x.max(row_y)
    }

    /// Worst-case displacement magnitude per axis.
    pub fn max_displacement(&self) -> (f64, f64) {
        let mut mx = 0.0;
        let mut my = 0.0;
        for t in &self.terms {
            mx += t.amp[0].abs();
            my += t.amp[1].abs();
        }
        (mx, my)
    }

    pub fn jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let mut j = [[0.0; 2]; 2];
        for t in &self.terms {
            let gpx = t.g_prime(t.freq_x[0] * x + t.freq_x[1] * y + t.phase[0]);
            let gpy = t.g_prime(t.freq_y[0] * x + t.freq_y[1] * y + t.phase[1]);
            j[0][0] += t.amp[0] * gpx * t.freq_x[0];
            j[0][1] += t.amp[0] * gpx * t.freq_x[1];
            j[1][0] += t.amp[1] * gpy * t.freq_y[0];
            j[1][1] += t.amp[1] * gpy * t.freq_y[1];
        }
        j
    }
}

/// Projector-to-camera spatial map: a homography followed by an analytic
/// displacement evaluated in camera coordinates,
/// `G(p) = c + D(c)` with `c = H(p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryWarp {
    pub homography: Mat3,
    pub displacement: DisplacementField,
}

impl GeometryWarp {
    pub fn identity() -> Self {
        Self {
            homography: Mat3::identity(),
            displacement: DisplacementField::zero(),
        }
    }

    pub fn new(homography: Mat3, displacement: DisplacementField) -> Result<Self, SimError> {
        let homography = homography
            .normalized()
            .ok_or_else(|| SimError::InvalidConfig {
                what: "homography has a vanishing scale entry".into(),
            })?;
        if homography.inverse().is_none() {
            return Err(SimError::InvalidConfig {
                what: "homography is not invertible".into(),
            });
        }
        Ok(Self {
            homography,
            displacement,
        })
    }

    /// Projector point -> camera point; None past the homography pole.
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (cx, cy) = self.homography.apply_projective(x, y)?;
        let (dx, dy) = self.displacement.eval(cx, cy);
        Some((cx + dx, cy + dy))
    }

    /// Camera point -> projector point.
    ///
    /// Solves c + D(c) = q by fixed-point iteration (the gradient cap makes
    /// the map contractive), then inverts the homography.
    pub fn invert(&self, qx: f64, qy: f64) -> Option<(f64, f64)> {
        let inv = self.homography.inverse()?;
        let (mut cx, mut cy) = (qx, qy);
        if !self.displacement.is_zero() {
            let mut converged = false;
            for _ in 0..80 {
                let (dx, dy) = self.displacement.eval(cx, cy);
                let (nx, ny) = (qx - dx, qy - dy);
                let step = (nx - cx).abs().max((ny - cy).abs());
                cx = nx;
                cy = ny;
                if step < 1e-10 {
                    converged = true;
                    break;
                }
            }
            let (dx, dy) = self.displacement.eval(cx, cy);
            if !converged && ((cx + dx - qx).abs().max((cy + dy - qy).abs()) > 1e-7) {
                return None;
            }
        }
        inv.apply_projective(cx, cy)
    }

    /// Forward-map Jacobian at a projector point.
    pub fn jacobian(&self, x: f64, y: f64) -> Option<[[f64; 2]; 2]> {
        let m = &self.homography.0;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        if w.abs() < 1e-9 {
            return None;
        }
        let (u, v) = self.homography.apply_projective(x, y)?;
        // d(num/w)/dp = (d num - value * d w) / w for each output row.
        let jh = [
            [(m[0][0] - u * m[2][0]) / w, (m[0][1] - u * m[2][1]) / w],
            [(m[1][0] - v * m[2][0]) / w, (m[1][1] - v * m[2][1]) / w],
        ];
        let jd = self.displacement.jacobian(u, v);
        let a = [
            [1.0 + jd[0][0], jd[0][1]],
            [jd[1][0], 1.0 + jd[1][1]],
        ];
        let mut out = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = a[r][0] * jh[0][c] + a[r][1] * jh[1][c];
            }
        }
        Some(out)
    }

    /// Construction-time checks: the projector border must land strictly
    /// inside the camera frame (margin one pixel) and the sampled forward
    /// Jacobian determinant must stay positive (no folds).
    pub fn validate(
        &self,
        projector_size: (usize, usize),
        camera_size: (usize, usize),
    ) -> Result<(), SimError> {
        let (pw, ph) = (projector_size.0 as f64, projector_size.1 as f64);
        let (cw, chh) = (camera_size.0 as f64, camera_size.1 as f64);
        const N: usize = 32;
        let mut border = Vec::with_capacity(4 * (N + 1));
        for i in 0..=N {
            let t = i as f64 / N as f64;
            border.push((t * (pw - 1.0), 0.0));
            border.push((t * (pw - 1.0), ph - 1.0));
            border.push((0.0, t * (ph - 1.0)));
            border.push((pw - 1.0, t * (ph - 1.0)));
        }
        for (x, y) in border {
            let (u, v) = self.apply(x, y).ok_or(SimError::NonInjective)?;
            if !(u >= 1.0 && u <= cw - 2.0 && v >= 1.0 && v <= chh - 2.0) {
                return Err(SimError::InvalidConfig {
                    what: format!(
                        "projector border point ({x:.1},{y:.1}) maps to ({u:.1},{v:.1}), outside the camera frame margin"
                    ),
                });
            }
        }
        const G: usize = 16;
        for iy in 0..=G {
            for ix in 0..=G {
                let x = ix as f64 / G as f64 * (pw - 1.0);
                let y = iy as f64 / G as f64 * (ph - 1.0);
                let j = self.jacobian(x, y).ok_or(SimError::NonInjective)?;
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if !(det.is_finite() && det > 1e-6) {
                    return Err(SimError::NonInjective);
                }
            }
        }
        Ok(())
    }
}
