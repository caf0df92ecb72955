use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::color::{srgb_decode, srgb_encode};
use super::{ImagingError, Raster};

fn io_err(context: &str, path: &Path, source: std::io::Error) -> ImagingError {
    ImagingError::Io {
        context: format!("{context} {}", path.display()),
        source,
    }
}

/// Write a raster as an 8-bit PNG with sRGB-coded storage.
///
/// Samples must already be in `[0, 1]`; each is sRGB-encoded then quantized,
/// so `read_png(write_png(r))` returns `r` up to 8-bit quantization.
/// Snap samples to the exact values an 8-bit PNG round-trip produces, so
/// an image quantized once survives write/read bit-for-bit.
pub fn png_quantized(raster: &Raster) -> Result<Raster, ImagingError> {
    raster.validate_unit_range()?;
    Ok(raster.map(|v| srgb_decode((srgb_encode(v) * 255.0).round().clamp(0.0, 255.0) / 255.0)))
}

pub fn write_png(raster: &Raster, path: &Path) -> Result<(), ImagingError> {
    raster.validate_unit_range()?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err("creating directory for", path, e))?;
        }
    }
    let bytes: Vec<u8> = raster
        .samples()
        .iter()
        .map(|&v| (srgb_encode(v) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let color = match raster.channels() {
        1 => image::ColorType::L8,
        _ => image::ColorType::Rgb8,
    };
    image::save_buffer(
        path,
        &bytes,
        raster.width() as u32,
        raster.height() as u32,
        color,
    )
    .map_err(|e| ImagingError::Png {
        context: format!("encoding {}", path.display()),
        message: e.to_string(),
    })
}

/// Read an 8-bit PNG written by [`write_png`] (or any gray/RGB PNG),
/// decoding the sRGB storage back to working floats.
pub fn read_png(path: &Path) -> Result<Raster, ImagingError> {
    let img = image::open(path).map_err(|e| ImagingError::Png {
        context: format!("decoding {}", path.display()),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let samples = buf
                .into_raw()
                .iter()
                .map(|&b| srgb_decode(b as f32 / 255.0))
                .collect();
            Raster::from_samples(w, h, 1, samples)
        }
        other => {
            let rgb = other.into_rgb8();
            let samples = rgb
                .into_raw()
                .iter()
                .map(|&b| srgb_decode(b as f32 / 255.0))
                .collect();
            Raster::from_samples(w, h, 3, samples)
        }
    }
}

/// Write raw float samples as PFM (`Pf` gray / `PF` color, little-endian).
///
/// PFM stores rows bottom-up; this writer follows that convention. No
/// transfer function is applied, so arbitrary finite floats round-trip.
pub fn write_pfm(raster: &Raster, path: &Path) -> Result<(), ImagingError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err("creating directory for", path, e))?;
        }
    }
    let channels = raster.channels();
    let magic = if channels == 1 { "Pf" } else { "PF" };
    let mut out = Vec::with_capacity(32 + raster.samples().len() * 4);
    out.extend_from_slice(
        format!("{magic}\n{} {}\n-1.0\n", raster.width(), raster.height()).as_bytes(),
    );
    // -1.0 scale => little-endian.
    for y in (0..raster.height()).rev() {
        for x in 0..raster.width() {
            for c in 0..channels {
                out.extend_from_slice(&raster.get(x, y, c).to_le_bytes());
            }
        }
    }
    let mut f = fs::File::create(path).map_err(|e| io_err("creating", path, e))?;
    f.write_all(&out).map_err(|e| io_err("writing", path, e))
}

/// Read a PFM file written by [`write_pfm`] (big-endian input also accepted).
pub fn read_pfm(path: &Path) -> Result<Raster, ImagingError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| io_err("opening", path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err("reading", path, e))?;
    let pfm_err = |message: String| ImagingError::Pfm {
        context: format!("parsing {}", path.display()),
        message,
    };

    // Header: magic, width height, scale — whitespace separated tokens.
    let mut pos = 0usize;
    let mut next_token = |bytes: &[u8]| -> Result<String, ImagingError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(pfm_err("truncated header".into()));
        }
        let tok = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        // Consume exactly one whitespace byte after the token.
        if pos < bytes.len() {
            pos += 1;
        }
        Ok(tok)
    };

    let magic = next_token(&bytes)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(pfm_err(format!("bad magic {other:?}"))),
    };
    let width: usize = next_token(&bytes)?
        .parse()
        .map_err(|_| pfm_err("bad width".into()))?;
    let height: usize = next_token(&bytes)?
        .parse()
        .map_err(|_| pfm_err("bad height".into()))?;
    let scale: f32 = next_token(&bytes)?
        .parse()
        .map_err(|_| pfm_err("bad scale".into()))?;
    let little_endian = scale < 0.0;

    let count = width * height * channels;
    let data = &bytes[pos..];
    if data.len() < count * 4 {
        return Err(pfm_err(format!(
            "payload holds {} bytes, expected {}",
            data.len(),
            count * 4
        )));
    }
    let mut samples = vec![0.0f32; count];
    for y in 0..height {
        let src_row = height - 1 - y; // stored bottom-up
        for i in 0..width * channels {
            let off = (src_row * width * channels + i) * 4;
            let raw: [u8; 4] = data[off..off + 4].try_into().expect("length checked");
            samples[y * width * channels + i] = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    Raster::from_samples(width, height, channels, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.png");
        let src = Raster::from_fn(16, 9, 3, |x, y| {
            [
                x as f32 / 15.0,
                y as f32 / 8.0,
                ((x + y) % 5) as f32 / 4.0,
            ]
        })
        .unwrap();
        write_png(&src, &path).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back.dims(), src.dims());
        // Worst 8-bit step: bright end, slope of the sRGB decode ~ 2.28,
        // so half a step is ~ 0.0045.
        let max_err = src
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err < 0.005, "max round-trip error {max_err}");
    }

    #[test]
    fn png_write_read_write_is_stable() {
        // Second round trip must be bitwise: quantization happens once.
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.png");
        let p2 = dir.path().join("b.png");
        let src = Raster::from_fn(8, 8, 1, |x, y| [(x * y) as f32 / 49.0, 0.0, 0.0]).unwrap();
        write_png(&src, &p1).unwrap();
        let once = read_png(&p1).unwrap();
        write_png(&once, &p2).unwrap();
        let twice = read_png(&p2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn pfm_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for channels in [1usize, 3] {
            let path = dir.path().join(format!("rt{channels}.pfm"));
            let src = Raster::from_fn(5, 4, channels, |x, y| {
                [
                    (x as f32 - 2.5) * 13.25,
                    -(y as f32) * 0.001,
                    f32::MIN_POSITIVE,
                ]
            })
            .unwrap();
            write_pfm(&src, &path).unwrap();
            let back = read_pfm(&path).unwrap();
            assert_eq!(src, back, "channels = {channels}");
        }
    }

    #[test]
    fn pfm_rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pfm");
        fs::write(&path, b"Pf\n4 4\n-1.0\nshort").unwrap();
        assert!(matches!(read_pfm(&path), Err(ImagingError::Pfm { .. })));
    }

    #[test]
    fn png_refuses_out_of_range_samples() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::constant(2, 2, 1, 1.5).unwrap();
        assert!(write_png(&r, &dir.path().join("x.png")).is_err());
    }
}
