use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::{png_quantized, ColorTriple, Raster};
use crate::sim::{DisplacementField, GeometryWarp, Mat3, SetupConfig, WaveTerm};

/// Scene family, ordered easy to hard.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    /// Flat surface, nearly uniform reflectance.
    Planar,
    /// Flat surface, strong multi-scale texture.
    Textured,
    /// Textured surface bent by smooth sinusoidal relief.
    Wavy,
    /// Textured surface with ridge-like (sharpened) relief.
    Sharp,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Planar,
        Difficulty::Textured,
        Difficulty::Wavy,
        Difficulty::Sharp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Planar => "planar",
            Difficulty::Textured => "textured",
            Difficulty::Wavy => "wavy",
            Difficulty::Sharp => "sharp",
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "planar" => Ok(Difficulty::Planar),
            "textured" => Ok(Difficulty::Textured),
            "wavy" => Ok(Difficulty::Wavy),
            "sharp" => Ok(Difficulty::Sharp),
            other => Err(format!(
                "unknown difficulty {other:?} (expected planar|textured|wavy|sharp)"
            )),
        }
    }
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Multi-octave value noise in [0, 1]: random lattices blended with
/// smoothstep weights, halving amplitude per octave.
fn value_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, octaves: usize) -> Vec<f32> {
    let mut field = vec![0.0f64; w * h];
    let mut total_amp = 0.0;
    for o in 0..octaves {
        let cells = 4usize << o;
        let amp = 0.5f64.powi(o as i32);
        total_amp += amp;
        let lat: Vec<f64> = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        let lat_at = |ix: usize, iy: usize| lat[iy * (cells + 1) + ix];
        for y in 0..h {
            let v = y as f64 / (h.max(2) - 1) as f64 * cells as f64;
            let y0 = (v.floor() as usize).min(cells - 1);
            let fy = v - y0 as f64;
            let sy = fy * fy * (3.0 - 2.0 * fy);
            for x in 0..w {
                let u = x as f64 / (w.max(2) - 1) as f64 * cells as f64;
                let x0 = (u.floor() as usize).min(cells - 1);
                let fx = u - x0 as f64;
                let sx = fx * fx * (3.0 - 2.0 * fx);
                let a = lat_at(x0, y0);
                let b = lat_at(x0 + 1, y0);
                let c = lat_at(x0, y0 + 1);
                let d = lat_at(x0 + 1, y0 + 1);
                let val = a * (1.0 - sx) * (1.0 - sy)
                    + b * sx * (1.0 - sy)
                    + c * (1.0 - sx) * sy
                    + d * sx * sy;
                field[y * w + x] += amp * val;
            }
        }
    }
    field.iter().map(|v| (v / total_amp) as f32).collect()
}

/// Surface reflectance on the camera grid: a shared multi-octave field plus
/// weaker per-channel variation, squeezed into [0.1, 1.0] and quantized to
/// PNG precision so the on-disk copy is bit-faithful.
fn sample_reflectance(rng: &mut ChaCha8Rng, size: (usize, usize), difficulty: Difficulty) -> Raster {
    let (w, h) = size;
    let (octaves, amp) = match difficulty {
        Difficulty::Planar => (3, 0.05),
        _ => (4, 0.38),
    };
    let base_tone = rng.gen_range(0.45..0.8);
    let tint = [
        rng.gen_range(0.9..1.1),
        rng.gen_range(0.9..1.1),
        rng.gen_range(0.9..1.1),
    ];
    let shared = value_noise(rng, w, h, octaves);
    let per_channel: Vec<Vec<f32>> = (0..3).map(|_| value_noise(rng, w, h, octaves)).collect();
    let mut r = Raster::new(w, h, 3).expect("valid dims");
    {
        let samples = r.samples_mut();
        for i in 0..w * h {
            for c in 0..3 {
                let n = shared[i] as f64 * 0.75 + per_channel[c][i] as f64 * 0.25;
                let v = base_tone * tint[c] + amp * (n - 0.5) * 2.0;
                samples[3 * i + c] = v.clamp(0.1, 1.0) as f32;
            }
        }
    }
    png_quantized(&r).expect("values already clamped")
}

fn sample_displacement(
    rng: &mut ChaCha8Rng,
    cam: (usize, usize),
    difficulty: Difficulty,
) -> DisplacementField {
    let size = cam.0.min(cam.1) as f64;
    let scale = size / 256.0;
    let (n_terms, amp_range, cycles, sharp) = match difficulty {
        Difficulty::Planar | Difficulty::Textured => return DisplacementField::zero(),
        Difficulty::Wavy => (2, 1.0..3.0, 1.2..2.8, 0.0),
        Difficulty::Sharp => (2, 1.0..2.5, 3.0..6.0, 0.0),
    };
    let mut terms = Vec::with_capacity(n_terms);
    for _ in 0..n_terms {
        let f = |rng: &mut ChaCha8Rng| {
            rng.gen_range(cycles.clone()) * std::f64::consts::TAU / size
                * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
        };
        let sharpness = if difficulty == Difficulty::Sharp {
            rng.gen_range(4.0..8.0)
        } else {
            sharp
        };
        terms.push(WaveTerm {
            amp: [
                rng.gen_range(amp_range.clone()) * scale,
                rng.gen_range(amp_range.clone()) * scale,
            ],
            freq_x: [f(rng), f(rng)],
            freq_y: [f(rng), f(rng)],
            phase: [
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.0..std::f64::consts::TAU),
            ],
            sharpness,
        });
    }
    // The cap shrinks amplitudes as needed to certify injectivity; sharp
    // ridges trade amplitude for steepness under the same budget.
    DisplacementField::with_gradient_cap(terms, 0.28).expect("capped terms are valid")
}

/// Random projector pose: rotation, anisotropic scale, shear, mild
/// perspective, centered in the camera frame with jitter. `margin` keeps the
/// projected border (plus displacement reach) inside the frame.
fn sample_homography(
    rng: &mut ChaCha8Rng,
    proj: (usize, usize),
    cam: (usize, usize),
    displacement: &DisplacementField,
) -> GeometryWarp {
    let (pw, ph) = (proj.0 as f64 - 1.0, proj.1 as f64 - 1.0);
    let (cw, ch) = (cam.0 as f64 - 1.0, cam.1 as f64 - 1.0);
    let reach: f64 = displacement
        .terms()
        .iter()
        .map(|t| t.amp[0].abs().max(t.amp[1].abs()))
        .sum();
    let margin = 3.0 + reach;

    let theta: f64 = rng.gen_range(-0.12..0.12);
    let shear: f64 = rng.gen_range(-0.08..0.08);
    let aspect: f64 = rng.gen_range(0.92..1.08);
    let mut base_scale: f64 = rng.gen_range(0.58..0.78);
    let jx = rng.gen_range(-0.05..0.05) * cw;
    let jy = rng.gen_range(-0.05..0.05) * ch;
    let px = rng.gen_range(-0.06..0.06) / cw.max(ch);
    let py = rng.gen_range(-0.06..0.06) / cw.max(ch);

    for attempt in 0..16 {
        // Last resort: a conservative centered pose that always fits.
        let (theta, shear, px, py, jx, jy) = if attempt == 15 {
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        } else {
            (theta, shear, px, py, jx, jy)
        };
        let sx = base_scale * (cw - 2.0 * margin) / pw;
        let sy = base_scale * aspect * (ch - 2.0 * margin) / ph;
        let rot = Mat3([
            [theta.cos(), -theta.sin(), 0.0],
            [theta.sin(), theta.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ]);
        let sh = Mat3([[1.0, shear, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let core = Mat3::translation(cw / 2.0 + jx, ch / 2.0 + jy)
            .mul(&rot)
            .mul(&sh)
            .mul(&Mat3::scale(sx, sy))
            .mul(&Mat3::translation(-pw / 2.0, -ph / 2.0));
        let mut m = core.0;
        m[2][0] = px;
        m[2][1] = py;
        if let Ok(warp) = GeometryWarp::new(Mat3(m), displacement.clone()) {
            if warp.validate(proj, cam).is_ok() {
                return warp;
            }
        }
        base_scale *= 0.88;
    }
    unreachable!("the centered fallback pose always validates")
}

/// Seeded random scene at explicit frame sizes. The same (seed, difficulty,
/// sizes) triple always yields the identical scene.
pub fn generate_setup_sized(
    seed: u64,
    difficulty: Difficulty,
    camera_size: (usize, usize),
    projector_size: (usize, usize),
) -> SetupConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reflectance = sample_reflectance(&mut rng, camera_size, difficulty);
    let displacement = sample_displacement(&mut rng, camera_size, difficulty);
    let geometry = sample_homography(&mut rng, projector_size, camera_size, &displacement);

    let projector_gamma = rng.gen_range(1.8..2.4);
    let camera_gamma = rng.gen_range(1.8..2.4);
    let ambient_level: f64 = rng.gen_range(0.0..0.15);
    let ambient = ColorTriple::linear(
        (ambient_level * rng.gen_range(0.85..1.15)).min(0.15),
        (ambient_level * rng.gen_range(0.85..1.15)).min(0.15),
        (ambient_level * rng.gen_range(0.85..1.15)).min(0.15),
    );
    let mut mixing = Mat3::identity();
    for r in 0..3 {
        for c in 0..3 {
            if r != c {
                mixing.0[r][c] = rng.gen_range(0.0..0.1);
            }
        }
    }
    let noise_sigma = rng.gen_range(0.0005..0.004);

    SetupConfig {
        reflectance,
        geometry,
        ambient,
        mixing,
        projector_gamma,
        camera_gamma,
        noise_sigma,
        camera_size,
        projector_size,
        seed,
    }
}

/// Seeded random scene at the default 256x256 frames.
pub fn generate_setup(seed: u64, difficulty: Difficulty) -> SetupConfig {
    generate_setup_sized(seed, difficulty, (256, 256), (256, 256))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_reproduces_the_scene_exactly() {
        for difficulty in Difficulty::ALL {
            let a = generate_setup_sized(42, difficulty, (64, 64), (64, 64));
            let b = generate_setup_sized(42, difficulty, (64, 64), (64, 64));
            assert_eq!(a.reflectance, b.reflectance);
            assert_eq!(a.geometry, b.geometry);
            assert_eq!(a.mixing, b.mixing);
            assert_eq!(a.ambient, b.ambient);
            assert_eq!(a.projector_gamma, b.projector_gamma);
            assert_eq!(a.camera_gamma, b.camera_gamma);
            assert_eq!(a.noise_sigma, b.noise_sigma);
        }
        let c = generate_setup_sized(43, Difficulty::Wavy, (64, 64), (64, 64));
        let d = generate_setup_sized(42, Difficulty::Wavy, (64, 64), (64, 64));
        assert_ne!(c.reflectance, d.reflectance);
    }

    #[test]
    fn planar_scenes_have_no_relief() {
        let s = generate_setup_sized(7, Difficulty::Planar, (64, 64), (64, 64));
        assert!(s.geometry.displacement.is_zero());
        let t = generate_setup_sized(7, Difficulty::Textured, (64, 64), (64, 64));
        assert!(t.geometry.displacement.is_zero());
        let w = generate_setup_sized(7, Difficulty::Wavy, (64, 64), (64, 64));
        assert!(!w.geometry.displacement.is_zero());
        let sh = generate_setup_sized(7, Difficulty::Sharp, (64, 64), (64, 64));
        assert!(sh.geometry.displacement.terms().iter().all(|t| t.sharpness >= 4.0));
    }

    #[test]
    fn a_hundred_seeded_scenes_all_validate() {
        for seed in 0..100u64 {
            let difficulty = Difficulty::ALL[(seed % 4) as usize];
            let s = generate_setup_sized(seed, difficulty, (96, 96), (96, 96));
            s.validate()
                .unwrap_or_else(|e| panic!("seed {seed} ({difficulty}): {e}"));
            assert!(s.has_invertible_mixing());
        }
    }

    #[test]
    fn sampled_parameters_stay_in_their_ranges() {
        for seed in 0..25u64 {
            let s = generate_setup_sized(seed, Difficulty::Textured, (64, 64), (64, 64));
            assert!((1.8..2.4).contains(&s.projector_gamma));
            assert!((1.8..2.4).contains(&s.camera_gamma));
            assert!(s.ambient.values.iter().all(|&v| (0.0..=0.15).contains(&v)));
            for r in 0..3 {
                for c in 0..3 {
                    if r == c {
                        assert_eq!(s.mixing.0[r][c], 1.0);
                    } else {
                        assert!((0.0..0.1).contains(&s.mixing.0[r][c]));
                    }
                }
            }
            let (lo, hi) = s.reflectance.min_max();
            assert!(lo >= 0.1 - 1e-6 && hi <= 1.0);
            assert!(s.noise_sigma > 0.0 && s.noise_sigma < 0.005);
        }
    }

    #[test]
    fn rescaling_to_evaluation_resolution_stays_valid() {
        for seed in [1u64, 9, 23] {
            let s = generate_setup_sized(seed, Difficulty::Wavy, (64, 64), (64, 64));
            let big = s.rescaled((150, 150), (150, 150)).unwrap();
            big.validate().unwrap();
        }
    }
}
