use super::{ImagingError, Raster};

/// Bilinear resize with corner-aligned sampling.
///
/// Source and target corners coincide, so resizing to the same size is the
/// identity and output values never overshoot the input range (every sample
/// is a convex combination). A target axis of length 1 samples the source
/// axis midpoint.
pub fn resample_bilinear(
    src: &Raster,
    new_width: usize,
    new_height: usize,
) -> Result<Raster, ImagingError> {
    if new_width == 0 || new_height == 0 {
        return Err(ImagingError::InvalidDimensions {
            width: new_width,
            height: new_height,
            channels: src.channels(),
        });
    }
    if (new_width, new_height) == src.dims() {
        return Ok(src.clone());
    }
    let axis_pos = |dst: usize, dst_len: usize, src_len: usize| -> f32 {
        if dst_len == 1 {
            (src_len - 1) as f32 * 0.5
        } else {
            dst as f32 * (src_len - 1) as f32 / (dst_len - 1) as f32
        }
    };
    let channels = src.channels();
    let mut out = Raster::new(new_width, new_height, channels)?;
    for y in 0..new_height {
        let sy = axis_pos(y, new_height, src.height());
        for x in 0..new_width {
            let sx = axis_pos(x, new_width, src.width());
            let v = src
                .sample_bilinear(sx, sy)
                .expect("corner-aligned positions stay inside the source");
            for c in 0..channels {
                out.set(x, y, c, v[c]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_bitwise_identity() {
        let src = Raster::from_fn(7, 5, 3, |x, y| {
            [x as f32 * 0.1, y as f32 * 0.15, (x + y) as f32 * 0.05]
        })
        .unwrap();
        let out = resample_bilinear(&src, 7, 5).unwrap();
        assert_eq!(src, out);
    }

    #[test]
    fn constant_stays_constant() {
        let src = Raster::constant(4, 4, 1, 0.37).unwrap();
        let out = resample_bilinear(&src, 11, 3).unwrap();
        for &v in out.samples() {
            assert_eq!(v, 0.37);
        }
    }

    #[test]
    fn checkerboard_center_resolves_to_half() {
        let src = Raster::from_samples(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = resample_bilinear(&src, 3, 3).unwrap();
        assert!((out.get(1, 1, 0) - 0.5).abs() < 1e-7, "center {}", out.get(1, 1, 0));
        // Corners land on source pixels.
        assert_eq!(out.get(0, 0, 0), 0.0);
        assert_eq!(out.get(2, 0, 0), 1.0);
    }

    #[test]
    fn no_overshoot_beyond_input_range() {
        let src = Raster::from_fn(9, 9, 1, |x, y| {
            [((x * 31 + y * 17) % 7) as f32 / 6.0, 0.0, 0.0]
        })
        .unwrap();
        let (lo, hi) = src.min_max();
        let up = resample_bilinear(&src, 30, 14).unwrap();
        let (ulo, uhi) = up.min_max();
        assert!(ulo >= lo - 1e-7 && uhi <= hi + 1e-7);
    }

    #[test]
    fn rejects_empty_target() {
        let src = Raster::constant(4, 4, 1, 0.0).unwrap();
        assert!(resample_bilinear(&src, 0, 4).is_err());
    }
}
