use serde::{Deserialize, Serialize};

use super::{ImagingError, Raster};

/// Tag describing how a [`ColorTriple`]'s components are to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    LinearRgb,
    Srgb,
    CieLab,
}

/// Three color components with an explicit space tag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorTriple {
    pub values: [f64; 3],
    pub space: ColorSpace,
}

impl ColorTriple {
    pub fn linear(r: f64, g: f64, b: f64) -> Self {
        Self {
            values: [r, g, b],
            space: ColorSpace::LinearRgb,
        }
    }

    pub fn gray_linear(v: f64) -> Self {
        Self::linear(v, v, v)
    }
}

/// sRGB-encoded component to linear light. Input must lie in `[0, 1]`.
pub fn srgb_to_linear(v: f32) -> Result<f32, ImagingError> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return Err(ImagingError::OutOfRange { value: v });
    }
    Ok(srgb_decode(v))
}

/// Linear-light component to sRGB encoding. Input must lie in `[0, 1]`.
pub fn linear_to_srgb(v: f32) -> Result<f32, ImagingError> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return Err(ImagingError::OutOfRange { value: v });
    }
    Ok(srgb_encode(v))
}

/// sRGB decode that clamps instead of erroring; for metric plumbing where
/// inputs are unit-range up to float noise.
#[inline]
pub fn srgb_decode_clamped(v: f32) -> f32 {
    srgb_decode(v.clamp(0.0, 1.0))
}

#[inline]
pub(crate) fn srgb_decode(v: f32) -> f32 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
pub(crate) fn srgb_encode(v: f32) -> f32 {
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

// sRGB primaries, D65 white.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];
const D65_WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

/// Linear RGB to CIE L*a*b* under D65.
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let mut xyz = [0.0f64; 3];
    for (i, row) in RGB_TO_XYZ.iter().enumerate() {
        xyz[i] = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
    }
    let f = |t: f64| -> f64 {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let fx = f(xyz[0] / D65_WHITE[0]);
    let fy = f(xyz[1] / D65_WHITE[1]);
    let fz = f(xyz[2] / D65_WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Per-pixel Lab image (3 channels: L*, a*, b*) from a linear-RGB raster.
pub fn lab_image(linear: &Raster) -> Raster {
    let rgb = linear.to_rgb();
    let mut out = Raster::new(rgb.width(), rgb.height(), 3).expect("valid dims");
    for (dst, px) in out
        .samples_mut()
        .chunks_exact_mut(3)
        .zip(rgb.samples().chunks_exact(3))
    {
        let lab = rgb_to_lab([px[0] as f64, px[1] as f64, px[2] as f64]);
        dst[0] = lab[0] as f32;
        dst[1] = lab[1] as f32;
        dst[2] = lab[2] as f32;
    }
    out
}

/// Rec. 709 luma of a linear-RGB raster (alias for [`Raster::luma`]).
pub fn luma_image(linear: &Raster) -> Raster {
    linear.luma()
}
