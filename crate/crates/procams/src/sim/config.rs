use std::path::Path;

use serde::{Deserialize, Serialize};

use super::warp::{GeometryWarp, Mat3};
use super::SimError;
use crate::imaging::{read_png, resample_bilinear, write_png, ColorSpace, ColorTriple, Raster};

/// Complete description of one projector-camera scene.
///
/// `reflectance` lives on the camera grid (the surface as the camera sees
/// it); `geometry` maps projector pixels into camera pixels; `ambient` is
/// linear radiance before surface reflection. `camera_gamma` follows the
/// encoding convention: the sensor stores `irradiance^(1/camera_gamma)`.
#[derive(Clone, Debug)]
pub struct SetupConfig {
    pub reflectance: Raster,
    pub geometry: GeometryWarp,
    pub ambient: ColorTriple,
    pub mixing: Mat3,
    pub projector_gamma: f64,
    pub camera_gamma: f64,
    pub noise_sigma: f64,
    pub camera_size: (usize, usize),
    pub projector_size: (usize, usize),
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SetupDoc {
    camera_size: [usize; 2],
    projector_size: [usize; 2],
    geometry: GeometryWarp,
    ambient: ColorTriple,
    mixing: Mat3,
    projector_gamma: f64,
    camera_gamma: f64,
    noise_sigma: f64,
    seed: u64,
    reflectance_png: String,
}

impl SetupConfig {
    /// Uniform white surface, aligned frames, ideal photometry.
    pub fn identity(size: (usize, usize), seed: u64) -> Self {
        Self {
            reflectance: Raster::constant(size.0, size.1, 3, 1.0).expect("valid dims"),
            geometry: GeometryWarp::identity(),
            ambient: ColorTriple::gray_linear(0.0),
            mixing: Mat3::identity(),
            projector_gamma: 1.0,
            camera_gamma: 1.0,
            noise_sigma: 0.0,
            camera_size: size,
            projector_size: size,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| SimError::InvalidConfig { what: what.into() };
        if self.camera_size.0 < 8
            || self.camera_size.1 < 8
            || self.projector_size.0 < 8
            || self.projector_size.1 < 8
        {
            return Err(bad("camera and projector frames must be at least 8x8"));
        }
        if self.reflectance.dims() != self.camera_size || self.reflectance.channels() != 3 {
            return Err(bad("reflectance must be an RGB raster on the camera grid"));
        }
        self.reflectance.validate_unit_range()?;
        if self.ambient.space != ColorSpace::LinearRgb {
            return Err(bad("ambient must be expressed in linear RGB"));
        }
        if !self.ambient.values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(bad("ambient components must be finite and non-negative"));
        }
        if !self
            .mixing
            .0
            .iter()
            .flatten()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            return Err(bad("mixing entries must be finite and non-negative"));
        }
        for (name, g) in [
            ("projector_gamma", self.projector_gamma),
            ("camera_gamma", self.camera_gamma),
        ] {
            if !(g.is_finite() && g > 0.0 && g <= 10.0) {
                return Err(SimError::InvalidConfig {
                    what: format!("{name} must lie in (0, 10], got {g}"),
                });
            }
        }
        if !(self.noise_sigma.is_finite() && (0.0..=0.25).contains(&self.noise_sigma)) {
            return Err(bad("noise_sigma must lie in [0, 0.25]"));
        }
        self.geometry.validate(self.projector_size, self.camera_size)
    }

    /// Channel crosstalk can be undone exactly.
    pub fn has_invertible_mixing(&self) -> bool {
        self.mixing.det().abs() > 1e-9
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn noiseless(&self) -> Self {
        Self {
            noise_sigma: 0.0,
            ..self.clone()
        }
    }

    /// The same physical scene observed at different frame resolutions.
    ///
    /// Coordinates rescale corner-aligned; the displacement waves keep
    /// their physical shape (amplitudes scale with the camera frame,
    /// frequencies inversely), and the reflectance is resampled.
    pub fn rescaled(
        &self,
        camera_size: (usize, usize),
        projector_size: (usize, usize),
    ) -> Result<Self, SimError> {
        let sx_c = (camera_size.0 as f64 - 1.0) / (self.camera_size.0 as f64 - 1.0);
        let sy_c = (camera_size.1 as f64 - 1.0) / (self.camera_size.1 as f64 - 1.0);
        let sx_p = (projector_size.0 as f64 - 1.0) / (self.projector_size.0 as f64 - 1.0);
        let sy_p = (projector_size.1 as f64 - 1.0) / (self.projector_size.1 as f64 - 1.0);
        let h = Mat3::scale(sx_c, sy_c)
            .mul(&self.geometry.homography)
            .mul(&Mat3::scale(1.0 / sx_p, 1.0 / sy_p));
        let terms = self
            .geometry
            .displacement
            .terms()
            .iter()
            .map(|t| {
                let mut t = *t;
                t.amp = [t.amp[0] * sx_c, t.amp[1] * sy_c];
                t.freq_x = [t.freq_x[0] / sx_c, t.freq_x[1] / sy_c];
                t.freq_y = [t.freq_y[0] / sx_c, t.freq_y[1] / sy_c];
                t
            })
            .collect();
        let geometry = GeometryWarp::new(
            h,
            super::warp::DisplacementField::new(terms)?,
        )?;
        let out = Self {
            reflectance: resample_bilinear(&self.reflectance, camera_size.0, camera_size.1)?,
            geometry,
            camera_size,
            projector_size,
            ..self.clone()
        };
        out.validate()?;
        Ok(out)
    }

    /// Write `<dir>/setup.json` plus `<dir>/reflectance.png`.
    pub fn save(&self, dir: &Path) -> Result<(), SimError> {
        let doc = SetupDoc {
            camera_size: [self.camera_size.0, self.camera_size.1],
            projector_size: [self.projector_size.0, self.projector_size.1],
            geometry: self.geometry.clone(),
            ambient: self.ambient,
            mixing: self.mixing,
            projector_gamma: self.projector_gamma,
            camera_gamma: self.camera_gamma,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            reflectance_png: "reflectance.png".into(),
        };
        std::fs::create_dir_all(dir).map_err(|e| SimError::Doc {
            context: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let json = serde_json::to_string_pretty(&doc).map_err(|e| SimError::Doc {
            context: "serialize".into(),
            message: e.to_string(),
        })?;
        std::fs::write(dir.join("setup.json"), json).map_err(|e| SimError::Doc {
            context: dir.join("setup.json").display().to_string(),
            message: e.to_string(),
        })?;
        write_png(&self.reflectance, &dir.join(&doc.reflectance_png))?;
        Ok(())
    }

    /// Load a setup saved by `save`; the reflectance PNG resolves relative
    /// to the JSON's directory. The loaded setup is fully validated.
    pub fn load(json_path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(json_path).map_err(|e| SimError::Doc {
            context: json_path.display().to_string(),
            message: e.to_string(),
        })?;
        let doc: SetupDoc = serde_json::from_str(&text).map_err(|e| SimError::Doc {
            context: json_path.display().to_string(),
            message: e.to_string(),
        })?;
        let dir = json_path.parent().unwrap_or_else(|| Path::new("."));
        let reflectance = read_png(&dir.join(&doc.reflectance_png))?;
        let setup = Self {
            reflectance,
            geometry: doc.geometry,
            ambient: doc.ambient,
            mixing: doc.mixing,
            projector_gamma: doc.projector_gamma,
            camera_gamma: doc.camera_gamma,
            noise_sigma: doc.noise_sigma,
            camera_size: (doc.camera_size[0], doc.camera_size[1]),
            projector_size: (doc.projector_size[0], doc.projector_size[1]),
            seed: doc.seed,
        };
        setup.validate()?;
        Ok(setup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::png_quantized;
    use crate::sim::warp::{DisplacementField, WaveTerm};

    fn sample_setup() -> SetupConfig {
        let refl = png_quantized(
            &Raster::from_fn(128, 128, 3, |x, y| {
                [
                    0.2 + 0.6 * (x as f32 / 127.0),
                    0.5,
                    0.3 + 0.5 * (y as f32 / 127.0),
                ]
            })
            .unwrap(),
        )
        .unwrap();
        SetupConfig {
            reflectance: refl,
            geometry: GeometryWarp::new(
                Mat3([[0.7, 0.01, 20.0], [-0.02, 0.72, 18.0], [4e-5, -3e-5, 1.0]]),
                DisplacementField::with_gradient_cap(
                    vec![WaveTerm {
                        amp: [1.5, 1.0],
                        freq_x: [0.05, 0.02],
                        freq_y: [0.03, 0.06],
                        phase: [0.3, 1.1],
                        sharpness: 0.0,
                    }],
                    0.3,
                )
                .unwrap(),
            )
            .unwrap(),
            ambient: ColorTriple::linear(0.04, 0.05, 0.03),
            mixing: Mat3([[0.9, 0.05, 0.02], [0.03, 0.92, 0.04], [0.01, 0.06, 0.88]]),
            projector_gamma: 2.2,
            camera_gamma: 2.2,
            noise_sigma: 0.002,
            camera_size: (128, 128),
            projector_size: (128, 128),
            seed: 7,
        }
    }

    #[test]
    fn valid_setup_passes_validation() {
        sample_setup().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut s = sample_setup();
        s.ambient = ColorTriple::linear(-0.1, 0.0, 0.0);
        assert!(s.validate().is_err());

        let mut s = sample_setup();
        s.mixing.0[1][2] = -0.2;
        assert!(s.validate().is_err());

        let mut s = sample_setup();
        s.camera_gamma = 0.0;
        assert!(s.validate().is_err());

        let mut s = sample_setup();
        s.reflectance = Raster::constant(64, 64, 3, 0.5).unwrap();
        assert!(s.validate().is_err());

        let mut s = sample_setup();
        s.geometry = GeometryWarp::new(Mat3::translation(500.0, 0.0), DisplacementField::zero())
            .unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn save_load_roundtrip_preserves_the_setup() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample_setup();
        s.save(dir.path()).unwrap();
        let back = SetupConfig::load(&dir.path().join("setup.json")).unwrap();
        assert_eq!(back.geometry, s.geometry);
        assert_eq!(back.mixing, s.mixing);
        assert_eq!(back.ambient, s.ambient);
        assert_eq!(back.seed, s.seed);
        assert_eq!(back.camera_size, s.camera_size);
        // Reflectance was pre-quantized to PNG precision, so the trip
        // through disk is lossless.
        assert_eq!(back.reflectance, s.reflectance);
    }

    #[test]
    fn rescaled_setup_maps_the_same_physical_points() {
        let s = sample_setup();
        let big = s.rescaled((255, 255), (255, 255)).unwrap();
        // Corner-aligned scale doubles coordinates exactly at 128 -> 255.
        for (px, py) in [(10.0, 20.0), (63.5, 90.0), (120.0, 5.0)] {
            let (u, v) = s.geometry.apply(px, py).unwrap();
            let (bu, bv) = big.geometry.apply(2.0 * px, 2.0 * py).unwrap();
            assert!(
                (bu - 2.0 * u).abs() < 1e-9 && (bv - 2.0 * v).abs() < 1e-9,
                "({px},{py}): {u},{v} vs {bu},{bv}"
            );
        }
        big.validate().unwrap();
    }
}
