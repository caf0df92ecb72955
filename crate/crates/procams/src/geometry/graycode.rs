use super::{FlowField, GeometryError};
use crate::imaging::Raster;

/// Per-plane decode threshold, relative to the local white-black range.
/// A bit is trusted only when |pattern - inverse| clears this fraction of
/// the pixel's full dynamic range, so uniform reflectance and ambient
/// scaling cancel out.
pub const TAU_BIT: f64 = 0.05;

fn bits_for(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

fn gray_encode(v: usize) -> usize {
    v ^ (v >> 1)
}

fn gray_decode(mut g: usize) -> usize {
    let mut shift = 1;
    while shift < usize::BITS as usize {
        g ^= g >> shift;
        shift <<= 1;
    }
    g
}

/// Number of frames `graycode_patterns` emits for a given projector size.
pub fn graycode_pattern_count(width: usize, height: usize) -> usize {
    2 * (bits_for(width) + bits_for(height)) + 2
}

/// Structured-light sequence for a projector of the given size.
///
/// Order: white, black, then per-axis bit planes MSB-first, each plane
/// immediately followed by its inverse. Columns are coded along x, rows
/// along y, using reflected binary code so adjacent indices differ in one
/// bit.
pub fn graycode_patterns(width: usize, height: usize) -> Result<Vec<Raster>, GeometryError> {
    if width == 0 || height == 0 {
        return Err(GeometryError::PatternDims { width, height });
    }
    let mut out = Vec::with_capacity(graycode_pattern_count(width, height));
    out.push(Raster::constant(width, height, 1, 1.0)?);
    out.push(Raster::constant(width, height, 1, 0.0)?);

    let mut push_axis = |bits: usize, along_x: bool| -> Result<(), GeometryError> {
        for plane in (0..bits).rev() {
            for inverse in [false, true] {
                let img = Raster::from_fn(width, height, 1, |x, y| {
                    let idx = if along_x { x } else { y };
                    let bit = (gray_encode(idx) >> plane) & 1 == 1;
                    [if bit != inverse { 1.0 } else { 0.0 }, 0.0, 0.0]
                })?;
                out.push(img);
            }
        }
        Ok(())
    };
    push_axis(bits_for(width), true)?;
    push_axis(bits_for(height), false)?;
    Ok(out)
}

fn luma_plane(img: &Raster) -> Vec<f64> {
    let (w, h) = img.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = if img.channels() == 1 {
                img.get(x, y, 0) as f64
            } else {
                let [r, g, b] = img.pixel_rgb(x, y);
                0.2126 * r as f64 + 0.7152 * g as f64 + 0.0722 * b as f64
            };
            out.push(v);
        }
    }
    out
}

/// Decode captured structured-light frames into a camera-frame flow field.
///
/// `captures` must follow the `graycode_patterns` order for `proj_size`;
/// `camera_mask` restricts decoding to the projector's field of view.
/// The result lives on the camera grid with `source_size = proj_size`:
/// a valid camera pixel q stores the displacement to the projector pixel
/// that illuminates it. Pixels are marked invalid when masked out, when
/// any bit plane is ambiguous (relative to the white-black range, see
/// `TAU_BIT`), when the range itself is non-positive, or when the decoded
/// index falls outside the projector frame.
pub fn graycode_decode(
    captures: &[Raster],
    camera_mask: &Raster,
    proj_size: (usize, usize),
) -> Result<FlowField, GeometryError> {
    let (pw, ph) = proj_size;
    if pw == 0 || ph == 0 {
        return Err(GeometryError::PatternDims {
            width: pw,
            height: ph,
        });
    }
    let expected = graycode_pattern_count(pw, ph);
    if captures.len() != expected {
        return Err(GeometryError::SequenceLength {
            got: captures.len(),
            expected,
        });
    }
    let (cw, ch) = captures[0].dims();
    for c in captures {
        if c.dims() != (cw, ch) {
            return Err(GeometryError::ShapeMismatch {
                a: captures[0].shape_string(),
                b: c.shape_string(),
            });
        }
    }
    if camera_mask.channels() != 1 || camera_mask.dims() != (cw, ch) {
        return Err(GeometryError::BadMask);
    }

    let planes: Vec<Vec<f64>> = captures.iter().map(luma_plane).collect();
    let white = &planes[0];
    let black = &planes[1];
    let bits_x = bits_for(pw);
    let bits_y = bits_for(ph);

    let mut flow = FlowField::invalid(cw, ch, proj_size);
    for i in 0..cw * ch {
        if camera_mask.samples()[i] <= 0.5 {
            continue;
        }
        let range = white[i] - black[i];
        if range <= 0.0 {
            continue;
        }
        let tau = TAU_BIT * range;
        let mut ok = true;
        let mut decode_axis = |bits: usize, first_plane: usize| -> usize {
            let mut gray = 0usize;
            for b in 0..bits {
                let p = planes[first_plane + 2 * b][i];
                let n = planes[first_plane + 2 * b + 1][i];
                let diff = p - n;
                if diff.abs() < tau {
                    ok = false;
                }
                gray = (gray << 1) | usize::from(diff > 0.0);
            }
            gray_decode(gray)
        };
        let px = decode_axis(bits_x, 2);
        let py = decode_axis(bits_y, 2 + 2 * bits_x);
        if !ok || px >= pw || py >= ph {
            continue;
        }
        let (qx, qy) = (i % cw, i / cw);
        flow.set(qx, qy, px as f32 - qx as f32, py as f32 - qy as f32);
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_mask(w: usize, h: usize) -> Raster {
        Raster::constant(w, h, 1, 1.0).unwrap()
    }

    #[test]
    fn gray_code_roundtrip_and_adjacency() {
        for v in 0..512usize {
            assert_eq!(gray_decode(gray_encode(v)), v);
        }
        for v in 0..511usize {
            let diff = gray_encode(v) ^ gray_encode(v + 1);
            assert_eq!(diff.count_ones(), 1, "codes {v},{} differ in >1 bit", v + 1);
        }
    }

    #[test]
    fn pattern_count_and_shape() {
        for (w, h, bits) in [(256, 256, 8 + 8), (300, 200, 9 + 8), (2, 2, 1 + 1)] {
            let pats = graycode_patterns(w, h).unwrap();
            assert_eq!(pats.len(), 2 * bits + 2);
            assert_eq!(pats.len(), graycode_pattern_count(w, h));
            for p in &pats {
                assert_eq!(p.dims(), (w, h));
                assert_eq!(p.channels(), 1);
                assert!(p.samples().iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }

    #[test]
    fn plane_and_inverse_are_complements() {
        let pats = graycode_patterns(64, 32).unwrap();
        for pair in pats[2..].chunks(2) {
            for (a, b) in pair[0].samples().iter().zip(pair[1].samples()) {
                assert_eq!(a + b, 1.0);
            }
        }
    }

    #[test]
    fn direct_view_decodes_to_zero_flow() {
        let (w, h) = (37, 23);
        let pats = graycode_patterns(w, h).unwrap();
        let flow = graycode_decode(&pats, &full_mask(w, h), (w, h)).unwrap();
        assert_eq!(flow.valid_fraction(), 1.0);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = flow.get(x, y).unwrap();
                assert_eq!((dx, dy), (0.0, 0.0), "at ({x},{y})");
            }
        }
    }

    #[test]
    fn reflectance_and_ambient_scaling_do_not_break_decode() {
        let (w, h) = (40, 40);
        let pats = graycode_patterns(w, h).unwrap();
        // Spatially varying reflectance in [0.25, 0.85] plus ambient floor.
        let captures: Vec<Raster> = pats
            .iter()
            .map(|p| {
                Raster::from_fn(w, h, 1, |x, y| {
                    let refl = 0.25 + 0.6 * (x as f32 / w as f32) * (y as f32 / h as f32);
                    [0.08 + refl * p.get(x, y, 0), 0.0, 0.0]
                })
                .unwrap()
            })
            .collect();
        let flow = graycode_decode(&captures, &full_mask(w, h), (w, h)).unwrap();
        assert_eq!(flow.valid_fraction(), 1.0);
        assert_eq!(flow.get(11, 29), Some((0.0, 0.0)));
    }

    #[test]
    fn mirrored_camera_decodes_mirrored_correspondence() {
        let (w, h) = (32, 16);
        let pats = graycode_patterns(w, h).unwrap();
        let captures: Vec<Raster> = pats
            .iter()
            .map(|p| Raster::from_fn(w, h, 1, |x, y| [p.get(w - 1 - x, y, 0), 0.0, 0.0]).unwrap())
            .collect();
        let flow = graycode_decode(&captures, &full_mask(w, h), (w, h)).unwrap();
        assert_eq!(flow.valid_fraction(), 1.0);
        for x in 0..w {
            let (dx, dy) = flow.get(x, 5).unwrap();
            assert_eq!(dx, (w - 1 - x) as f32 - x as f32);
            assert_eq!(dy, 0.0);
        }
    }

    #[test]
    fn unlit_pixels_are_invalid() {
        let (w, h) = (16, 16);
        let pats = graycode_patterns(w, h).unwrap();
        // Left half sees the projector, right half is dark.
        let captures: Vec<Raster> = pats
            .iter()
            .map(|p| {
                Raster::from_fn(w, h, 1, |x, y| {
                    [if x < w / 2 { 0.1 + 0.7 * p.get(x, y, 0) } else { 0.05 }, 0.0, 0.0]
                })
                .unwrap()
            })
            .collect();
        let flow = graycode_decode(&captures, &full_mask(w, h), (w, h)).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(flow.get(x, y).is_some(), x < w / 2, "at ({x},{y})");
            }
        }
    }

    #[test]
    fn ambiguous_bits_fall_below_threshold() {
        let (w, h) = (8, 8);
        let pats = graycode_patterns(w, h).unwrap();
        // Blur one bit plane pair toward 0.5 at a single pixel: the decode
        // must reject that pixel rather than guess.
        let mut captures = pats.clone();
        captures[2].set(3, 3, 0, 0.51);
        captures[3].set(3, 3, 0, 0.49);
        let flow = graycode_decode(&captures, &full_mask(w, h), (w, h)).unwrap();
        assert!(flow.get(3, 3).is_none());
        assert!(flow.get(4, 4).is_some());
    }

    #[test]
    fn out_of_range_codes_are_rejected() {
        // Width 5 needs 3 bits (codes 0..8); fabricate a capture whose
        // decoded column is 6.
        let (w, h) = (5, 4);
        let pats = graycode_patterns(w, h).unwrap();
        let mut captures = pats.clone();
        let g = gray_encode(6);
        for b in 0..3 {
            let bit = (g >> (2 - b)) & 1 == 1;
            captures[2 + 2 * b].set(0, 0, 0, if bit { 1.0 } else { 0.0 });
            captures[2 + 2 * b + 1].set(0, 0, 0, if bit { 0.0 } else { 1.0 });
        }
        let flow = graycode_decode(&captures, &full_mask(w, h), (w, h)).unwrap();
        assert!(flow.get(0, 0).is_none());
        assert!(flow.get(1, 0).is_some());
    }

    #[test]
    fn mask_excludes_pixels_from_decode() {
        let (w, h) = (12, 12);
        let pats = graycode_patterns(w, h).unwrap();
        let mut mask = full_mask(w, h);
        mask.set(4, 4, 0, 0.0);
        let flow = graycode_decode(&pats, &mask, (w, h)).unwrap();
        assert!(flow.get(4, 4).is_none());
        assert!(flow.get(5, 4).is_some());

        let bad = Raster::constant(w + 1, h, 1, 1.0).unwrap();
        assert!(matches!(
            graycode_decode(&pats, &bad, (w, h)),
            Err(GeometryError::BadMask)
        ));
    }

    #[test]
    fn wrong_sequence_length_is_an_error() {
        let pats = graycode_patterns(16, 16).unwrap();
        let err = graycode_decode(&pats[..5], &full_mask(16, 16), (16, 16)).unwrap_err();
        assert!(matches!(
            err,
            GeometryError::SequenceLength {
                got: 5,
                expected: 18
            }
        ));
    }
}
