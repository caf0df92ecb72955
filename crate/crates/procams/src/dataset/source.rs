use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DatasetError;
use crate::imaging::{png_quantized, Raster};

/// Self-contained projection content: cycles through gradient, checker,
/// glyph-stroke, and plasma families so datasets never depend on external
/// image folders. Deterministic in (index, size) and pre-quantized to PNG
/// precision.
pub fn procedural_image(index: usize, w: usize, h: usize) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0000 ^ index as u64);
    let img = match index % 4 {
        0 => gradient(&mut rng, w, h),
        1 => checker(&mut rng, w, h),
        2 => glyphs(&mut rng, w, h),
        _ => plasma(&mut rng, w, h),
    };
    png_quantized(&img).expect("generated values are in range")
}

fn rand_color(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> [f32; 3] {
    [
        rng.gen_range(lo..hi),
        rng.gen_range(lo..hi),
        rng.gen_range(lo..hi),
    ]
}

/// Oblique gradient through three random color stops.
fn gradient(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Raster {
    let theta: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let (cx, cy) = (theta.cos(), theta.sin());
    let stops = [
        rand_color(rng, 0.0, 0.5),
        rand_color(rng, 0.25, 0.75),
        rand_color(rng, 0.5, 1.0),
    ];
    let diag = ((w * w + h * h) as f32).sqrt();
    Raster::from_fn(w, h, 3, |x, y| {
        let t = ((x as f32 * cx + y as f32 * cy) / diag + 0.5).clamp(0.0, 1.0) * 2.0;
        let (seg, f) = if t < 1.0 { (0, t) } else { (1, t - 1.0) };
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = stops[seg][c] * (1.0 - f) + stops[seg + 1][c] * f;
        }
        out
    })
    .expect("valid dims")
}

/// Rotated two-color checkerboard with a random cell size.
fn checker(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Raster {
    let cell = rng.gen_range((w.min(h) / 12).max(2)..(w.min(h) / 4).max(4)) as f32;
    let theta: f32 = rng.gen_range(-0.4..0.4);
    let (ct, st) = (theta.cos(), theta.sin());
    let a = rand_color(rng, 0.0, 0.45);
    let b = rand_color(rng, 0.55, 1.0);
    Raster::from_fn(w, h, 3, |x, y| {
        let u = (x as f32 * ct - y as f32 * st) / cell;
        let v = (x as f32 * st + y as f32 * ct) / cell;
        let parity = (u.floor() as i64 + v.floor() as i64).rem_euclid(2);
        if parity == 0 {
            a
        } else {
            b
        }
    })
    .expect("valid dims")
}

/// Text-like rows of bright strokes on a dark page.
fn glyphs(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Raster {
    let bg = rand_color(rng, 0.02, 0.15);
    let ink = rand_color(rng, 0.65, 1.0);
    let line_h = (h / 10).max(4);
    let mut img = Raster::from_fn(w, h, 3, |_, _| bg).expect("valid dims");
    let mut row = line_h / 2;
    while row + line_h < h {
        let mut col = rng.gen_range(0..w / 8 + 1);
        while col + 2 < w {
            let glyph_w = rng.gen_range(2..(w / 12).max(3));
            let glyph_h = rng.gen_range(line_h / 2..line_h);
            if rng.gen_bool(0.75) {
                for y in row..(row + glyph_h).min(h) {
                    for x in col..(col + glyph_w).min(w) {
                        // Hollow some glyphs so strokes carry structure.
                        let edge = y == row
                            || y + 1 >= (row + glyph_h).min(h)
                            || x == col
                            || x + 1 >= (col + glyph_w).min(w);
                        if edge || rng.gen_bool(0.35) {
                            for (c, &v) in ink.iter().enumerate() {
                                img.set(x, y, c, v);
                            }
                        }
                    }
                }
            }
            col += glyph_w + rng.gen_range(1..4);
        }
        row += line_h + line_h / 3;
    }
    img
}

/// Smooth multi-frequency color field.
fn plasma(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Raster {
    let mut freqs = [[0.0f32; 4]; 3];
    for ch in &mut freqs {
        for f in ch.iter_mut() {
            *f = rng.gen_range(0.02..0.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    let phases: Vec<f32> = (0..6).map(|_| rng.gen_range(0.0..6.28)).collect();
    Raster::from_fn(w, h, 3, |x, y| {
        let (u, v) = (x as f32, y as f32);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let s = 0.5
                + 0.25 * (freqs[c][0] * u + freqs[c][1] * v + phases[c]).sin()
                + 0.2 * (freqs[c][2] * u + freqs[c][3] * v + phases[c + 3]).cos();
            out[c] = s.clamp(0.0, 1.0);
        }
        out
    })
    .expect("valid dims")
}

/// Sorted PNG paths under a directory, for user-supplied projection content.
pub fn load_source_images(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| DatasetError::io(dir.display(), e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Deterministic augmentation for cycling past the end of a source folder:
/// pass 0 is the original, then horizontal, vertical, and double flips.
pub(crate) fn augmented(img: &Raster, pass: usize) -> Raster {
    let (w, h) = img.dims();
    let (fx, fy) = match pass % 4 {
        0 => (false, false),
        1 => (true, false),
        2 => (false, true),
        _ => (true, true),
    };
    if !fx && !fy {
        return img.clone();
    }
    Raster::from_fn(w, h, 3, |x, y| {
        let sx = if fx { w - 1 - x } else { x };
        let sy = if fy { h - 1 - y } else { y };
        let p = img.pixel_rgb(sx, sy);
        [p[0], p[1], p[2]]
    })
    .expect("valid dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_images_are_deterministic_and_in_range() {
        for i in 0..8 {
            let a = procedural_image(i, 48, 40);
            let b = procedural_image(i, 48, 40);
            assert_eq!(a, b);
            assert_eq!(a.dims(), (48, 40));
            assert_eq!(a.channels(), 3);
            let (lo, hi) = a.min_max();
            assert!(lo >= 0.0 && hi <= 1.0);
        }
    }

    #[test]
    fn consecutive_indices_differ() {
        let imgs: Vec<Raster> = (0..6).map(|i| procedural_image(i, 32, 32)).collect();
        for i in 0..imgs.len() {
            for j in i + 1..imgs.len() {
                assert_ne!(imgs[i], imgs[j], "{i} vs {j}");
            }
        }
    }

    #[test]
    fn every_family_carries_texture() {
        for i in 0..4 {
            let img = procedural_image(i, 64, 64);
            let (lo, hi) = img.min_max();
            assert!(hi - lo > 0.2, "family {i} is nearly flat");
        }
    }

    #[test]
    fn augmentation_flips_are_involutions() {
        let img = procedural_image(3, 33, 21);
        assert_eq!(augmented(&img, 0), img);
        assert_eq!(augmented(&augmented(&img, 1), 1), img);
        assert_eq!(augmented(&augmented(&img, 2), 2), img);
        assert_eq!(augmented(&augmented(&img, 3), 3), img);
        assert_ne!(augmented(&img, 1), img);
    }

    #[test]
    fn source_folder_listing_is_sorted_and_png_only() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "a.png", "c.txt", "d.PNG"] {
            std::fs::write(dir.path().join(name), b"x").unwrap();
        }
        let got = load_source_images(dir.path()).unwrap();
        let names: Vec<_> = got
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, vec!["a.png", "b.png", "d.PNG"]);
    }
}
