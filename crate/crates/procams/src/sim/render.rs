use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{SetupConfig, SimError, PRIOR_LEVELS};
use crate::geometry::FlowField;
use crate::imaging::Raster;

/// Linear-domain threshold on the white-minus-black difference that counts
/// a camera pixel as inside the projector's field of view; chosen to stay
/// robust under capture noise up to sigma = 0.005.
pub const FOV_TAU: f64 = 0.02;

/// Per-camera-pixel projector source index under the geometric warp
/// (-1 where no projector pixel lands). Reusable across captures of the
/// same setup; building it performs the per-pixel inverse warp once.
pub struct RenderCache {
    nearest: Vec<i32>,
    camera_size: (usize, usize),
    projector_size: (usize, usize),
}

impl RenderCache {
    /// Source pixel illuminating camera pixel q, if any.
    pub fn source_pixel(&self, qx: usize, qy: usize) -> Option<(usize, usize)> {
        let idx = self.nearest[qy * self.camera_size.0 + qx];
        if idx < 0 {
            None
        } else {
            let pw = self.projector_size.0;
            Some((idx as usize % pw, idx as usize / pw))
        }
    }
}

pub fn build_render_cache(setup: &SetupConfig) -> Result<RenderCache, SimError> {
    let (cw, ch) = setup.camera_size;
    let (pw, ph) = setup.projector_size;
    let rows: Vec<Vec<i32>> = (0..ch)
        .into_par_iter()
        .map(|qy| {
            let mut row = vec![-1i32; cw];
            for (qx, slot) in row.iter_mut().enumerate() {
                if let Some((px, py)) = setup.geometry.invert(qx as f64, qy as f64) {
                    let (rx, ry) = (px.round(), py.round());
                    if rx >= 0.0 && ry >= 0.0 && (rx as usize) < pw && (ry as usize) < ph {
                        *slot = (ry as usize * pw + rx as usize) as i32;
                    }
                }
            }
            row
        })
        .collect();
    Ok(RenderCache {
        nearest: rows.concat(),
        camera_size: (cw, ch),
        projector_size: (pw, ph),
    })
}

/// Capture of drive image `x` under the setup's forward model (see module
/// docs). `x` may be grayscale; it is broadcast across RGB. The expensive
/// inverse warp is rebuilt per call — use `render_capture_cached` when
/// rendering many frames of one setup.
pub fn render_capture(x: &Raster, setup: &SetupConfig, with_noise: bool) -> Result<Raster, SimError> {
    let cache = build_render_cache(setup)?;
    render_capture_cached(x, setup, &cache, with_noise)
}

pub fn render_capture_cached(
    x: &Raster,
    setup: &SetupConfig,
    cache: &RenderCache,
    with_noise: bool,
) -> Result<Raster, SimError> {
    if x.dims() != setup.projector_size {
        return Err(SimError::SizeMismatch {
            got: x.shape_string(),
            expected: format!("projector {}x{}", setup.projector_size.0, setup.projector_size.1),
        });
    }
    if cache.camera_size != setup.camera_size || cache.projector_size != setup.projector_size {
        return Err(SimError::SizeMismatch {
            got: format!("cache {}x{}", cache.camera_size.0, cache.camera_size.1),
            expected: format!("camera {}x{}", setup.camera_size.0, setup.camera_size.1),
        });
    }
    x.validate_unit_range()?;
    crate::init_thread_pool();

    let x = x.to_rgb();
    let (pw, ph) = setup.projector_size;
    let gp = setup.projector_gamma;
    // Projector stage: nonlinearity then channel crosstalk, in linear light.
    let mut emitted = vec![[0.0f64; 3]; pw * ph];
    for (i, out) in emitted.iter_mut().enumerate() {
        let px = &x.samples()[3 * i..3 * i + 3];
        let lit = [
            (px[0] as f64).powf(gp),
            (px[1] as f64).powf(gp),
            (px[2] as f64).powf(gp),
        ];
        *out = setup.mixing.mul_vec(lit);
    }

    let (cw, ch) = setup.camera_size;
    let amb = setup.ambient.values;
    let inv_gc = 1.0 / setup.camera_gamma;
    let refl = setup.reflectance.samples();
    let rows: Vec<Vec<f32>> = (0..ch)
        .into_par_iter()
        .map(|qy| {
            let mut row = vec![0.0f32; cw * 3];
            for qx in 0..cw {
                let i = qy * cw + qx;
                let src = cache.nearest[i];
                let w = if src >= 0 {
                    emitted[src as usize]
                } else {
                    [0.0; 3]
                };
                for c in 0..3 {
                    let lin = (w[c] + amb[c]) * refl[3 * i + c] as f64;
                    row[3 * qx + c] = lin.powf(inv_gc).clamp(0.0, 1.0) as f32;
                }
            }
            row
        })
        .collect();
    let mut samples = rows.concat();

    if with_noise && setup.noise_sigma > 0.0 {
        // Serial draw in sample order keeps captures bitwise reproducible.
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
        let normal = Normal::new(0.0f64, setup.noise_sigma).expect("validated sigma");
        for v in &mut samples {
            *v = (*v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
    Ok(Raster::from_samples(cw, ch, 3, samples)?)
}

/// Capture of a uniform gray probe at one of the admissible drive levels.
pub fn capture_surface_prior(
    level: u8,
    setup: &SetupConfig,
    with_noise: bool,
) -> Result<Raster, SimError> {
    capture_surface_prior_cached(level, setup, &build_render_cache(setup)?, with_noise)
}

pub(crate) fn capture_surface_prior_cached(
    level: u8,
    setup: &SetupConfig,
    cache: &RenderCache,
    with_noise: bool,
) -> Result<Raster, SimError> {
    if !PRIOR_LEVELS.contains(&level) {
        return Err(SimError::PriorLevel { level });
    }
    let (pw, ph) = setup.projector_size;
    let drive = Raster::constant(pw, ph, 3, level as f32 / 255.0)?;
    render_capture_cached(&drive, setup, cache, with_noise)
}

pub struct FovMasks {
    /// Camera pixels the projector demonstrably reaches.
    pub camera: Raster,
    /// The projector frame itself (all ones).
    pub projector: Raster,
    /// No camera pixel responded to the projector at all.
    pub degenerate: bool,
}

/// Field-of-view masks from a noiseless white/black capture pair, compared
/// in linear units against `FOV_TAU`.
pub fn render_fov_masks(setup: &SetupConfig) -> Result<FovMasks, SimError> {
    let cache = build_render_cache(setup)?;
    render_fov_masks_cached(setup, &cache)
}

pub(crate) fn render_fov_masks_cached(
    setup: &SetupConfig,
    cache: &RenderCache,
) -> Result<FovMasks, SimError> {
    let quiet = setup.noiseless();
    let (pw, ph) = setup.projector_size;
    let white = render_capture_cached(&Raster::constant(pw, ph, 3, 1.0)?, &quiet, cache, false)?;
    let black = render_capture_cached(&Raster::constant(pw, ph, 3, 0.0)?, &quiet, cache, false)?;
    let (cw, ch) = setup.camera_size;
    let gc = setup.camera_gamma;
    let mut mask = Raster::new(cw, ch, 1)?;
    let mut any = false;
    for qy in 0..ch {
        for qx in 0..cw {
            let [wr, wg, wb] = white.pixel_rgb(qx, qy);
            let [br, bg, bb] = black.pixel_rgb(qx, qy);
            let d = |a: f32, b: f32| (a as f64).powf(gc) - (b as f64).powf(gc);
            let lum = 0.2126 * d(wr, br) + 0.7152 * d(wg, bg) + 0.0722 * d(wb, bb);
            if lum > FOV_TAU {
                mask.set(qx, qy, 0, 1.0);
                any = true;
            }
        }
    }
    Ok(FovMasks {
        camera: mask,
        projector: Raster::constant(pw, ph, 1, 1.0)?,
        degenerate: !any,
    })
}

/// Exact continuous backward flow: each FOV camera pixel stores the real-
/// valued projector coordinate that maps onto it, as a displacement.
/// The ground-truth oracle for flow estimators.
pub fn true_flow(setup: &SetupConfig) -> Result<FlowField, SimError> {
    let cache = build_render_cache(setup)?;
    let masks = render_fov_masks_cached(setup, &cache)?;
    let (cw, ch) = setup.camera_size;
    let mut flow = FlowField::invalid(cw, ch, setup.projector_size);
    for qy in 0..ch {
        for qx in 0..cw {
            if masks.camera.get(qx, qy, 0) <= 0.5 {
                continue;
            }
            let (px, py) = setup
                .geometry
                .invert(qx as f64, qy as f64)
                .ok_or(SimError::NonInjective)?;
            flow.set(qx, qy, (px - qx as f64) as f32, (py - qy as f64) as f32);
        }
    }
    Ok(flow)
}

/// Discrete ground-truth correspondence realized by the renderer: each FOV
/// camera pixel points at the exact projector pixel whose light it
/// receives. Structured-light decoding should reproduce this field with
/// zero end-point error on noiseless setups.
pub fn true_correspondence(setup: &SetupConfig) -> Result<FlowField, SimError> {
    let cache = build_render_cache(setup)?;
    let masks = render_fov_masks_cached(setup, &cache)?;
    let (cw, ch) = setup.camera_size;
    let mut flow = FlowField::invalid(cw, ch, setup.projector_size);
    for qy in 0..ch {
        for qx in 0..cw {
            if masks.camera.get(qx, qy, 0) <= 0.5 {
                continue;
            }
            let (px, py) = cache.source_pixel(qx, qy).ok_or(SimError::NonInjective)?;
            flow.set(qx, qy, px as f32 - qx as f32, py as f32 - qy as f32);
        }
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::warp_with_mask;
    use crate::imaging::ColorTriple;
    use crate::sim::warp::{DisplacementField, GeometryWarp, Mat3, WaveTerm};

    fn shrink_geometry() -> GeometryWarp {
        GeometryWarp::new(
            Mat3([[0.75, 0.015, 18.0], [-0.01, 0.72, 22.0], [3e-5, -2e-5, 1.0]]),
            DisplacementField::with_gradient_cap(
                vec![WaveTerm {
                    amp: [2.0, 1.4],
                    freq_x: [0.045, 0.015],
                    freq_y: [0.02, 0.05],
                    phase: [0.8, 2.0],
                    sharpness: 0.0,
                }],
                0.3,
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn textured_reflectance(w: usize, h: usize) -> Raster {
        Raster::from_fn(w, h, 3, |x, y| {
            let u = x as f32 / (w - 1) as f32;
            let v = y as f32 / (h - 1) as f32;
            [
                0.3 + 0.5 * u,
                0.4 + 0.3 * (6.0 * u).sin().abs() * 0.9,
                0.25 + 0.6 * v,
            ]
        })
        .unwrap()
    }

    fn test_setup() -> SetupConfig {
        SetupConfig {
            reflectance: textured_reflectance(128, 128),
            geometry: shrink_geometry(),
            ambient: ColorTriple::linear(0.03, 0.02, 0.04),
            mixing: Mat3([[0.92, 0.04, 0.02], [0.03, 0.9, 0.05], [0.02, 0.03, 0.94]]),
            projector_gamma: 2.0,
            camera_gamma: 1.8,
            noise_sigma: 0.003,
            camera_size: (128, 128),
            projector_size: (128, 128),
            seed: 99,
        }
    }

    #[test]
    fn identity_setup_reproduces_the_input() {
        let setup = SetupConfig::identity((64, 64), 0);
        let x = Raster::from_fn(64, 64, 3, |x, y| {
            [
                x as f32 / 63.0,
                y as f32 / 63.0,
                ((x + y) % 7) as f32 / 6.0,
            ]
        })
        .unwrap();
        let cap = render_capture(&x, &setup, false).unwrap();
        let diff = cap.mean_abs_diff(&x).unwrap();
        assert!(diff < 1e-7, "identity capture differs by {diff}");
    }

    #[test]
    fn ambient_only_scene_reflects_off_the_surface() {
        let mut setup = SetupConfig::identity((32, 32), 0);
        setup.ambient = ColorTriple::gray_linear(0.1);
        setup.reflectance = Raster::constant(32, 32, 3, 0.5).unwrap();
        let x = Raster::constant(32, 32, 3, 0.0).unwrap();
        let cap = render_capture(&x, &setup, false).unwrap();
        for &v in cap.samples() {
            assert!((v - 0.05).abs() < 1e-7);
        }
    }

    #[test]
    fn projector_gamma_follows_the_power_law() {
        let mut setup = SetupConfig::identity((32, 32), 0);
        setup.projector_gamma = 2.2;
        let cap = render_capture(&Raster::constant(32, 32, 3, 0.5).unwrap(), &setup, false)
            .unwrap();
        let expect = 0.5f64.powf(2.2);
        for &v in cap.samples() {
            assert!((v as f64 - expect).abs() < 1e-6, "{v} vs {expect}");
        }
        assert!((expect - 0.2176).abs() < 5e-4);
    }

    #[test]
    fn camera_gamma_encodes_the_irradiance() {
        let mut setup = SetupConfig::identity((32, 32), 0);
        setup.camera_gamma = 2.0;
        let cap = render_capture(&Raster::constant(32, 32, 3, 0.25).unwrap(), &setup, false)
            .unwrap();
        for &v in cap.samples() {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn prior_at_level_zero_equals_black_render_exactly() {
        let setup = test_setup();
        let cache = build_render_cache(&setup).unwrap();
        let prior = capture_surface_prior_cached(0, &setup, &cache, false).unwrap();
        let black = render_capture_cached(
            &Raster::constant(128, 128, 3, 0.0).unwrap(),
            &setup,
            &cache,
            false,
        )
        .unwrap();
        assert_eq!(prior, black);
        assert!(matches!(
            capture_surface_prior(100, &setup, false),
            Err(SimError::PriorLevel { level: 100 })
        ));
    }

    #[test]
    fn gamma_setup_prior_level_matches_closed_form() {
        let mut setup = SetupConfig::identity((32, 32), 5);
        setup.projector_gamma = 2.2;
        setup.reflectance = Raster::constant(32, 32, 3, 0.6).unwrap();
        setup.ambient = ColorTriple::gray_linear(0.05);
        let cap = capture_surface_prior(128, &setup, false).unwrap();
        let expect = ((128.0f64 / 255.0).powf(2.2) + 0.05) * 0.6;
        for &v in cap.samples() {
            assert!((v as f64 - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn scalar_monotonicity_holds_without_noise() {
        let setup = test_setup().noiseless();
        let cache = build_render_cache(&setup).unwrap();
        let mut prev = render_capture_cached(
            &Raster::constant(128, 128, 3, 0.0).unwrap(),
            &setup,
            &cache,
            false,
        )
        .unwrap();
        for lvl in [0.2f32, 0.45, 0.7, 1.0] {
            let cap = render_capture_cached(
                &Raster::constant(128, 128, 3, lvl).unwrap(),
                &setup,
                &cache,
                false,
            )
            .unwrap();
            for (a, b) in prev.samples().iter().zip(cap.samples()) {
                assert!(b + 1e-7 >= *a, "capture must grow with drive level");
            }
            prev = cap;
        }
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let setup = test_setup();
        let x = Raster::from_fn(128, 128, 3, |x, y| {
            [
                (x as f32 * 0.31).sin().abs(),
                (y as f32 * 0.17).cos().abs(),
                0.5,
            ]
        })
        .unwrap();
        let a = render_capture(&x, &setup, true).unwrap();
        let b = render_capture(&x, &setup, true).unwrap();
        assert_eq!(a, b);
        let c = render_capture(&x, &setup.with_seed(100), true).unwrap();
        assert_ne!(a, c);
        let clean = render_capture(&x, &setup, false).unwrap();
        assert_ne!(a, clean);
        assert!(a.mean_abs_diff(&clean).unwrap() < 4.0 * setup.noise_sigma);
    }

    #[test]
    fn fov_mask_area_tracks_the_homography() {
        // Central half-scale placement: the FOV should cover ~25% of the
        // camera frame.
        let mut setup = SetupConfig::identity((256, 256), 0);
        setup.geometry = GeometryWarp::new(
            Mat3([[0.5, 0.0, 64.0], [0.0, 0.5, 64.0], [0.0, 0.0, 1.0]]),
            DisplacementField::zero(),
        )
        .unwrap();
        let masks = render_fov_masks(&setup).unwrap();
        assert!(!masks.degenerate);
        let area: f64 = masks.camera.samples().iter().map(|&v| v as f64).sum();
        let frac = area / (256.0 * 256.0);
        assert!((frac - 0.25).abs() < 0.02, "FOV fraction {frac}");
        assert_eq!(masks.projector.dims(), (256, 256));
        assert!(masks.projector.samples().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_gain_mixing_is_flagged_degenerate() {
        let mut setup = SetupConfig::identity((32, 32), 0);
        setup.ambient = ColorTriple::gray_linear(0.1);
        setup.mixing = Mat3([[0.0; 3]; 3]);
        let masks = render_fov_masks(&setup).unwrap();
        assert!(masks.degenerate);
        assert!(masks.camera.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn true_flow_is_zero_for_identity_geometry() {
        let setup = SetupConfig::identity((48, 48), 0);
        let flow = true_flow(&setup).unwrap();
        assert_eq!(flow.valid_fraction(), 1.0);
        for y in 0..48 {
            for x in 0..48 {
                assert_eq!(flow.get(x, y), Some((0.0, 0.0)));
            }
        }
    }

    #[test]
    fn translation_true_flow_is_the_negative_offset() {
        let mut setup = SetupConfig::identity((64, 64), 0);
        setup.projector_size = (48, 48);
        setup.geometry =
            GeometryWarp::new(Mat3::translation(5.0, 3.0), DisplacementField::zero()).unwrap();
        setup.validate().unwrap();
        let flow = true_flow(&setup).unwrap();
        let (dx, dy) = flow.get(20, 20).unwrap();
        assert_eq!((dx, dy), (-5.0, -3.0));
        // Outside the translated projector frame there is no flow.
        assert!(flow.get(0, 0).is_none());
        assert!(flow.get(4, 10).is_none());
    }

    #[test]
    fn true_flow_agrees_with_forward_map_roundtrip() {
        let setup = test_setup();
        let flow = true_flow(&setup).unwrap();
        assert!(flow.valid_fraction() > 0.3);
        let mut checked = 0;
        for qy in (0..128).step_by(9) {
            for qx in (0..128).step_by(9) {
                if let Some((dx, dy)) = flow.get(qx, qy) {
                    let (px, py) = (qx as f64 + dx as f64, qy as f64 + dy as f64);
                    let (u, v) = setup.geometry.apply(px, py).unwrap();
                    assert!(
                        (u - qx as f64).abs() < 1e-3 && (v - qy as f64).abs() < 1e-3,
                        "roundtrip ({qx},{qy}) -> ({px:.2},{py:.2}) -> ({u:.3},{v:.3})"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn correspondence_is_the_quantized_flow() {
        let setup = test_setup();
        let cont = true_flow(&setup).unwrap();
        let disc = true_correspondence(&setup).unwrap();
        assert_eq!(cont.valid_count(), disc.valid_count());
        let stats = disc.epe_vs(&cont).unwrap();
        // Rounding to the source pixel moves each vector by at most half a
        // pixel per axis.
        assert!(stats.max <= (0.5f64 * 0.5 + 0.5 * 0.5).sqrt() + 1e-6);
    }

    #[test]
    fn capture_composes_photometry_with_the_true_flow() {
        // With uniform reflectance the capture factorizes: warping the
        // identity-geometry capture by the true flow reproduces the full
        // render up to interpolation error.
        let mut setup = test_setup().noiseless();
        setup.reflectance = Raster::constant(128, 128, 3, 0.7).unwrap();
        let x = Raster::from_fn(128, 128, 3, |x, y| {
            let u = x as f32 / 127.0;
            let v = y as f32 / 127.0;
            [
                0.5 + 0.36 * (1.6 * u + 0.7 * v).sin(),
                0.5 + 0.3 * (1.3 * v).cos(),
                0.4 + 0.3 * (2.0 * u * v).sin(),
            ]
        })
        .unwrap();
        let full = render_capture(&x, &setup, false).unwrap();

        let mut flat = setup.clone();
        flat.geometry = GeometryWarp::identity();
        let photo = render_capture(&x, &flat, false).unwrap();

        let flow = true_flow(&setup).unwrap();
        let (warped, mask) = warp_with_mask(&photo, &flow).unwrap();
        let mut acc = 0.0f64;
        let mut n = 0usize;
        for y in 0..128 {
            for x in 0..128 {
                if mask.get(x, y, 0) > 0.5 {
                    for c in 0..3 {
                        acc += (warped.get(x, y, c) - full.get(x, y, c)).abs() as f64;
                        n += 1;
                    }
                }
            }
        }
        let mean = acc / n as f64;
        assert!(n > 10_000);
        assert!(mean < 2e-3, "composition mean abs error {mean}");
    }
}
